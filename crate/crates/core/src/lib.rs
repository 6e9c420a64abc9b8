//! Simulation of extracellular-vesicle drug delivery: Ca²⁺-driven release,
//! advection-diffusion transport through the extracellular matrix, and
//! uptake at a receiver cell.

pub mod channel;
pub mod error;
pub mod io;
pub mod receiver;
pub mod scenario;
pub mod release;
pub mod units;

pub use error::{Error, Result};
pub use channel::grid::{AdvectionScheme, BoxGrid, GridSolver};
pub use channel::{ChannelParams, ConcentrationField, DegradationConvention, ProbeSeries};
pub use receiver::{ClathrinParams, LigandReceptorParams, ReceiverTrajectory};
pub use release::{CalciumDrive, ExocytosisParams, MvbParams, ReleaseEventSeries, ReleaseProfile};
pub use scenario::{RunReport, ScenarioConfig};
