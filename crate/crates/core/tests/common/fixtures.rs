/// Twenty candidate/reference pairs covering repeats, reordering, inflections,
/// case differences, empty sides and disjoint vocabularies.
pub const METRIC_PAIRS: [(&str, &str); 20] = [
    ("sinus rhythm , normal ecg", "sinus rhythm , normal ecg"),
    ("sinus rhythm", "sinus rhythm observed"),
    ("the the the", "the cat"),
    ("atrial fibrillation detected", "atrial fibrillation detected"),
    ("x", "x"),
    ("sinus bradycardia", "atrial fibrillation"),
    ("", "sinus rhythm"),
    ("premature ventricular contractions", "premature ventricular contraction"),
    ("Sinus Rhythm with PACs", "sinus rhythm with pacs"),
    ("rhythm sinus , ecg normal", "sinus rhythm , normal ecg"),
    ("a b a b a", "b a b"),
    ("left axis deviation , left ventricular hypertrophy", "left ventricular hypertrophy with left axis deviation"),
    ("sinus tachycardia 130 beats per minute", "sinus tachycardia 150 beats per minute"),
    ("marked sinus bradycardia with rate 45", "sinus bradycardia"),
    ("abnormal ecg", "abnormal ecg , abnormal ecg"),
    ("inferior infarction , age undetermined", "infarction inferior age undetermined"),
    ("pacing detected detected", "detected pacing"),
    ("repolarization abnormalities noted", "repolarization abnormality noting"),
    ("irregular response 110 atrial fibrillation", "atrial fibrillation , irregular response 110"),
    ("t wave changes , consider ischemia", "nonspecific t wave abnormality"),
];

/// Tokenizer inputs paired with their expected tokens written out by hand.
pub const TOKENIZER_CASES: [(&str, &[&str]); 20] = [
    ("sinus rhythm", &["sinus", "rhythm"]),
    ("", &[]),
    ("   ", &[]),
    ("rate 72bpm", &["rate", "72", "bpm"]),
    ("qt/qtc 400/420", &["qt", "/", "qtc", "400", "/", "420"]),
    ("st-t changes.", &["st", "-", "t", "changes", "."]),
    ("a,b", &["a", ",", "b"]),
    ("v1-v3", &["v", "1", "-", "v", "3"]),
    ("1.5 mm", &["1", ".", "5", "mm"]),
    ("(probable) lvh", &["(", "probable", ")", "lvh"]),
    ("sinus\trhythm\nnormal", &["sinus", "rhythm", "normal"]),
    ("!!", &["!", "!"]),
    ("ab12cd34", &["ab", "12", "cd", "34"]),
    ("über normal", &["über", "normal"]),
    ("axis: -30°", &["axis", ":", "-", "30", "°"]),
    ("a&b", &["a", "&", "b"]),
    ("lead ii, iii, avf", &["lead", "ii", ",", "iii", ",", "avf"]),
    ("pr 120ms;qrs 90ms", &["pr", "120", "ms", ";", "qrs", "90", "ms"]),
    ("x  y", &["x", "y"]),
    ("'quoted'", &["'", "quoted", "'"]),
];

pub fn words(s: &str) -> Vec<String> {
    s.split_whitespace().map(String::from).collect()
}
