#![allow(dead_code)]

pub mod gradcheck;
pub mod oracle;
pub mod randcfg;
pub mod refcoder;
