//! Linear analysis of the one-joint closed loop: polynomials, transfer functions,
//! state-space models, frequency response and positive-realness.

pub mod freq;
pub mod passivity;
pub mod poly;
pub mod ss;
pub mod tf;

pub use freq::{bode, freq_response, logspace, BodePoint, Channel, FreqSample, FrequencyResponse};
pub use passivity::{positive_real_check, PositiveRealReport, Verdict, Witness};
pub use ss::{assemble_closed_loop, assemble_coupled, ss_to_tf, StateSpace, MAX_TF_STATES};
pub use tf::{
    admittance_1dof, admittance_1dof_with_outer, env_impedance_tf, poles_zeros, target_admittance,
    EnvironmentImpedance, PoleZero, RationalTF, TargetImpedance,
};
