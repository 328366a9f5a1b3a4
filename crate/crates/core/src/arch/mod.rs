//! Model descriptions, layer plans, runnable models and width derivation.

mod model;
mod plan;
mod search;
mod spec;

pub use model::{apply_output, apply_output_graph, in_branch, layer_param_names, MaskOutput, MaskVars, Model};
pub use plan::{
    bottleneck_freq, decoder_params, encoder_params, Act, BranchPlan, LayerDomain, LayerKind, LayerPlan, Plan,
};
pub use search::{derive_complex, hybrid_budget_errors, hybridize, real_budget, RealBudget, Seeds, DEFAULT_TOL};
pub use spec::{BottleneckConcat, BranchSpec, Budget, Conversion, Domain, Family, ModelSpec, SPEC_VERSION};
