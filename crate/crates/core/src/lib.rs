pub mod bench;
pub mod bound;
pub mod certify;
pub mod lpcore;
pub mod market;
pub mod payoff;
pub mod report;
pub mod cli;
pub mod instances;
