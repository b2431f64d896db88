pub mod linalg;
pub mod ustat;
