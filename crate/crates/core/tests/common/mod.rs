#![allow(dead_code)]

pub mod fixtures;
pub mod modules;
pub mod oracle;
