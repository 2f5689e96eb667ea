//! Library-level round trips across modules.

use phi43::config::{parse_config, RunConfig};
use phi43::cutoff::{p_mn, CutoffPair};
use phi43::gff::{rng_stream, sample_gff, ModelParams};
use phi43::grid::{GridSpec, RealField};
use phi43::lp::{paraproduct, DyadicPartition};
use phi43::snapshot;
use phi43::sqe::{run_trajectory, Mode, Schedule};
use phi43::suite::{invariance_observables, Model};
use proptest::prelude::*;

fn grid() -> GridSpec {
    GridSpec::new(8, 2.0).unwrap()
}

fn field(seed: u64) -> RealField {
    let p = ModelParams::new(5.0, 0.0, 3.1, 1.0).unwrap();
    sample_gff(grid(), &p, &mut rng_stream(seed, 0))
}

#[test]
fn config_roundtrips_through_json() {
    let mut c = RunConfig::default();
    c.seed = 99;
    c.cutoffs.schedule = vec![2, 3];
    let text = serde_json::to_string(&c).unwrap();
    let back = parse_config(&text).unwrap().config;
    assert_eq!(back.seed, 99);
    assert_eq!(back.cutoffs.schedule, vec![2, 3]);
    assert_eq!(serde_json::to_string(&back).unwrap(), text);
}

#[test]
fn sigma_outside_window_warns_but_parses() {
    let parsed = parse_config(r#"{ "model": { "sigma": 2.0 } }"#).unwrap();
    assert!(!parsed.warnings.is_empty());
}

#[test]
fn trajectory_final_state_survives_a_snapshot() {
    let mut c = RunConfig::default();
    c.grid.n = 8;
    c.grid.l = 2.0;
    c.cutoffs.m = 1;
    c.cutoffs.n = 1;
    let model = Model::build(&c, 1).unwrap();
    let engine = model.engine(Mode::Direct).unwrap();
    let mut rng = rng_stream(1, 0);
    let state = engine.init(&field(1), 0, &mut rng).unwrap();
    let obs = invariance_observables(model.grid());
    let traj = run_trajectory(&engine, state, Schedule { t_end: 0.2, thinning: 5 }, &obs, &mut rng).unwrap();
    assert!(traj.series.iter().all(|r| r.value.is_finite()));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("final.phi4");
    snapshot::write(&path, &[traj.state.field()], 1).unwrap();
    let (header, back) = snapshot::read(&path).unwrap();
    assert_eq!(header.n, 8);
    assert_eq!(back[0].values(), traj.state.field().values());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn bony_and_duality_hold_for_random_fields(a in 0u64..1000, b in 0u64..1000, n in 1u32..4) {
        let (f, g) = (field(a), field(b + 1000));
        let partition = DyadicPartition::new(grid()).unwrap();
        let pp = paraproduct(&f, &g, &partition).unwrap();
        let err = pp.lt.add(&pp.res).add(&pp.gt).sub(&f.mul(&g)).max_abs();
        prop_assert!(err <= 1e-10 * (1.0 + f.mul(&g).max_abs()));
        let cut = CutoffPair::unweighted(grid(), 1, n).unwrap();
        let lhs = p_mn(&f, &cut, false).unwrap().inner(&g);
        let rhs = f.inner(&p_mn(&g, &cut, true).unwrap());
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()));
    }

    #[test]
    fn snapshots_roundtrip_bit_exact(a in 0u64..1000, seed in any::<u64>(), ts in any::<u64>()) {
        let fs = vec![field(a), field(a + 1)];
        let bytes = snapshot::encode(&fs, seed, ts).unwrap();
        let (h, back) = snapshot::decode(&bytes).unwrap();
        prop_assert_eq!(h.seed, seed);
        prop_assert_eq!(h.timestamp, ts);
        for (x, y) in fs.iter().zip(&back) {
            prop_assert!(x.values().iter().zip(y.values()).all(|(p, q)| p.to_bits() == q.to_bits()));
        }
    }
}
