#![allow(dead_code)]

pub mod al;
pub mod entropy;
pub mod golden;
pub mod mutation;
pub mod tiny;
pub mod tree;
