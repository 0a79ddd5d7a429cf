use bklab_core::context::{build_context, FieldSpec, Flavor};
use bklab_core::grid::{enumerate, EnumerationGrid, GridMode};
use std::time::Instant;

fn main() {
    let c1 = build_context(3, 1, 1, Flavor::PrincipalSeries, FieldSpec::degree(1), None, None).unwrap();
    let t = Instant::now();
    let g = EnumerationGrid::default_for(&c1, 2, 1, GridMode::Exhaustive, 0);
    let (mods, stats) = enumerate(&g).unwrap();
    println!("C1 exhaustive: candidates={} valid={} in {:?}", stats.candidates, mods.len(), t.elapsed());

    let c2 = build_context(3, 2, 1, Flavor::PrincipalSeries, FieldSpec::degree(2), None, None).unwrap();
    let t = Instant::now();
    let g = EnumerationGrid::default_for(&c2, 2, 1, GridMode::Sample { valid: 1000, max_draws: 500_000 }, 42);
    let (mods, stats) = enumerate(&g).unwrap();
    println!("C2 sampled: candidates={} valid={} rejects={:?} in {:?}", stats.candidates, mods.len(), stats.by_reason, t.elapsed());

    let c3 = build_context(3, 1, 1, Flavor::Cuspidal, FieldSpec::degree(2), None, None).unwrap();
    let t = Instant::now();
    let g = EnumerationGrid::default_for(&c3, 2, 1, GridMode::Sample { valid: 1000, max_draws: 500_000 }, 42);
    let (mods, stats) = enumerate(&g).unwrap();
    println!("C3 sampled: candidates={} valid={} rejects(sum)={} in {:?}", stats.candidates, mods.len(),
        stats.by_reason.values().sum::<u64>(), t.elapsed());
}
