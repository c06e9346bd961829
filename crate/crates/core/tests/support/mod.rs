pub mod equivalence;
pub mod oracle;
