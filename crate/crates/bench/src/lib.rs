//! Fixtures shared by the benchmarks.

use gpcbf::benchmark;
use gpcbf::{BarrierCandidate, GpPosterior};

/// The benchmark model and its certified barrier.
pub struct JetFixture {
    pub gp: GpPosterior,
    pub barrier: BarrierCandidate,
}

pub fn jet_fixture() -> JetFixture {
    let gp = benchmark::learned_model(benchmark::SEED).expect("benchmark model");
    let result = gpcbf::synthesis::cegis(
        &benchmark::barrier_template(),
        &gp,
        &gpcbf::dynamics::jet_engine_input_map(),
        &gpcbf::dynamics::jet_engine_problem(),
        &benchmark::confidence_box(),
        &benchmark::cegis_config(),
    )
    .expect("synthesis runs");
    let barrier = result.candidate().expect("a candidate").clone();
    JetFixture { gp, barrier }
}
