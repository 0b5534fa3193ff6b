pub mod asymptotics;
pub mod geometry;
pub mod jet;
pub mod linalg;
pub mod quadrature;
pub mod real;
pub mod scenarios;
pub mod sections;
pub mod verify;
