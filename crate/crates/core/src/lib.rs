pub mod controller;
pub mod funnel;
pub mod scenario;
pub mod sequencer;
pub mod sim;
pub mod stl;
