//! Where frame schedules go. The simulator backend drives the magnet model
//! directly; the logging backend stands in for a hardware transport and
//! writes every frame in dump format while keeping a simulated twin.

use std::io::Write;
use std::sync::{Arc, Mutex};

use coilboard_core::driver::{frame_dump_line, FrameSchedule};
use coilboard_core::sim::{SimEvent, SimState};

use crate::error::ServiceError;

pub trait Backend: Send {
    fn name(&self) -> &'static str;
    fn run(&mut self, schedule: &FrameSchedule) -> Result<Vec<SimEvent>, ServiceError>;
    /// Model of the board state as seen by this backend.
    fn sim(&self) -> &SimState;
    fn sim_mut(&mut self) -> &mut SimState;
}

pub struct SimBackend {
    state: SimState,
}

impl SimBackend {
    pub fn new(state: SimState) -> Self {
        Self { state }
    }
}

impl Backend for SimBackend {
    fn name(&self) -> &'static str {
        "simulator"
    }

    fn run(&mut self, schedule: &FrameSchedule) -> Result<Vec<SimEvent>, ServiceError> {
        Ok(self.state.run_schedule(schedule)?)
    }

    fn sim(&self) -> &SimState {
        &self.state
    }

    fn sim_mut(&mut self) -> &mut SimState {
        &mut self.state
    }
}

pub struct LogBackend {
    twin: SimState,
    sink: Arc<Mutex<dyn Write + Send>>,
}

impl LogBackend {
    pub fn new(twin: SimState, sink: Arc<Mutex<dyn Write + Send>>) -> Self {
        Self { twin, sink }
    }
}

impl Backend for LogBackend {
    fn name(&self) -> &'static str {
        "frame-log"
    }

    fn run(&mut self, schedule: &FrameSchedule) -> Result<Vec<SimEvent>, ServiceError> {
        {
            let mut sink = self.sink.lock().map_err(|_| ServiceError::Storage("frame log poisoned".into()))?;
            for frame in &schedule.frames {
                writeln!(sink, "{}", frame_dump_line(frame)).map_err(|e| ServiceError::Storage(e.to_string()))?;
            }
        }
        Ok(self.twin.run_schedule(schedule)?)
    }

    fn sim(&self) -> &SimState {
        &self.twin
    }

    fn sim_mut(&mut self) -> &mut SimState {
        &mut self.twin
    }
}
