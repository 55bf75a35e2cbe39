#![allow(dead_code)]

pub mod gradcheck;
pub mod ndcg_oracle;
pub mod search_oracle;
