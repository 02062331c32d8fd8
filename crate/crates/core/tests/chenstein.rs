use knnball::chenstein::{
    chebyshev_distance, occupancy_count, occupancy_holds, summarize_diagnostics, GridRule, GridSpec,
};
use knnball::experiment::{run_experiment, ExperimentConfig};
use knnball::measures::{replicate_seed, sample_points, DensityModel};

const SEED: u64 = 77;

fn diagnostics_run(n: u64, reps: usize) -> knnball::experiment::SummaryReport {
    let mut cfg = ExperimentConfig::new(2, n, 1, 0.0, reps, SEED);
    cfg.chenstein_diagnostics = true;
    run_experiment(&cfg).unwrap()
}

#[test]
fn occupancy_failures_are_rare_and_do_not_grow() {
    let u = DensityModel::uniform(2).unwrap();
    let rate = |n: u64| {
        let grid = GridSpec::new(n, 0.5, 2, GridRule::Total).unwrap();
        let fails = (0..1000)
            .filter(|&i| {
                let s = sample_points(&u, n as usize, replicate_seed(SEED, i)).unwrap();
                !occupancy_holds(&grid, occupancy_count(&grid, &s))
            })
            .count();
        fails as f64 / 1000.0
    };
    let (a, b) = (rate(10_000), rate(20_000));
    assert!(a < 0.005, "failure rate {a}");
    assert!(b <= a);
}

#[test]
fn literal_grid_is_never_fully_occupied() {
    // N = 357 per axis: 127k subcubes for 1e4 points
    let u = DensityModel::uniform(2).unwrap();
    let grid = knnball::chenstein::grid_size(10_000, 0.5, 2).unwrap();
    let s = sample_points(&u, 10_000, 1).unwrap();
    assert!(!occupancy_holds(&grid, occupancy_count(&grid, &s)));
}

#[test]
fn b1_and_local_collisions_shrink_with_n() {
    let reports: Vec<_> = [1_000u64, 10_000, 100_000]
        .iter()
        .map(|&n| diagnostics_run(n, 200))
        .collect();
    let b1: Vec<f64> = reports
        .iter()
        .map(|r| r.diagnostics.as_ref().unwrap().b1)
        .collect();
    let rn: Vec<f64> = reports
        .iter()
        .map(|r| r.diagnostics.as_ref().unwrap().rn_estimate)
        .collect();
    assert!(b1.windows(2).all(|w| w[1] < w[0]), "b1 {b1:?}");
    assert!(rn.windows(2).all(|w| w[1] < w[0]), "R(n) {rn:?}");
    for r in &reports {
        let d = r.diagnostics.as_ref().unwrap();
        assert_eq!(d.b3, 0.0);
        assert_eq!(d.bound, 2.0 * (d.b1 + d.b2 + d.b3));
        assert!(r.records.iter().all(|x| x.hat_count <= x.count));
    }
}

#[test]
fn mismatches_are_collisions() {
    let r = diagnostics_run(1_000, 500);
    for (rec, b) in r.records.iter().zip(&r.blocks) {
        // C != Ĉ exactly when some subcube hosts two or more exceedances
        let collision = b.cells.cells.len() as u64 != rec.count;
        assert_eq!(rec.count != rec.hat_count, collision);
        assert_eq!(b.cells.cells.len() as u64, rec.hat_count);
    }
}

#[test]
fn distant_blocks_are_uncorrelated_given_occupancy() {
    let r = diagnostics_run(1_000, 3000);
    let (a, b) = (vec![2u32, 2], vec![6u32, 6]);
    assert!(chebyshev_distance(&a, &b) >= 3);
    let kept: Vec<_> = r.blocks.iter().filter(|x| x.occupancy_ok).collect();
    let xs: Vec<f64> = kept
        .iter()
        .map(|x| f64::from(u8::from(x.cells.cells.contains(&a))))
        .collect();
    let ys: Vec<f64> = kept
        .iter()
        .map(|x| f64::from(u8::from(x.cells.cells.contains(&b))))
        .collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    assert!(mx > 0.0 && my > 0.0, "blocks never exceeded");
    let cov = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - mx) * (y - my))
        .sum::<f64>()
        / n;
    let corr = cov / (mx * (1.0 - mx) * my * (1.0 - my)).sqrt();
    // under independence the sample correlation has SE ~ 1/sqrt(n)
    assert!(
        corr.abs() <= 4.0 / n.sqrt(),
        "corr {corr} over {n} replicates"
    );
}

#[test]
fn conditioned_block_is_reported() {
    let r = diagnostics_run(1_000, 150);
    let d = r.diagnostics.unwrap();
    let c = d
        .conditioned
        .expect("all replicates occupy every subcube here");
    assert_eq!(c.replicates_kept + c.replicates_discarded, 150);
    assert!((0.0..=1.0).contains(&c.mismatch_rate));
    let again = summarize_diagnostics(&r.blocks, 1, 5).unwrap();
    assert_eq!(again.b1, d.b1);
}
