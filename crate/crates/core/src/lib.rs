pub mod encoder;
pub mod exec;
pub mod harness;
pub mod kernel;
pub mod slots;
pub mod sqlgen;
pub mod table;
pub mod typerec;
