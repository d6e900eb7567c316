//! Core model of a tactile marker display built from offset coil lattices:
//! grid topology, matrix drive encoding, a kinematic magnet simulator and a
//! multi-marker motion planner.

pub mod driver;
pub mod grid;
pub mod planner;
pub mod sim;

pub use driver::{encode_frame, schedule_frames, schedule_ids, DrivePattern, Frame, FrameSchedule, Level};
pub use grid::{CoilAddress, CoilGrid, CoilId, HardwareProfile, Layer, ModuleId, Point};
pub use planner::{compile_plan, park_all, plan_multi, plan_path, MotionPlan, PlanStatus, PlannerOptions};
pub use sim::{Marker, MarkerId, MarkerState, SimEvent, SimParams, SimState};
