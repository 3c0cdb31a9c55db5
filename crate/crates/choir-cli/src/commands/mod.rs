//! One module per subcommand.

pub mod canonicalize;
pub mod eval;
pub mod gen_data;
pub mod knn_audit;
pub mod selfcheck;
pub mod train;
