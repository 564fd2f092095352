pub mod actuators;
pub mod friction;
pub mod suspension;
pub mod tire;
pub mod vehicle;
