#![allow(dead_code)]

pub mod desk;
pub mod fixtures;
pub mod gradcheck;
pub mod oracle;
