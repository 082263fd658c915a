mod complete;
mod eval;
mod gen_data;
mod inspect;
mod train;

pub use complete::complete;
pub use eval::{eval, RoleArg};
pub use gen_data::gen_data;
pub use inspect::inspect;
pub use train::train;
