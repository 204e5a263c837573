use hsdetect::detectors::{CemVariant, Detector};
use hsdetect::metrics::RankedScores;
use hsdetect::nalgebra::{DMatrix, DVector};
use hsdetect::synth::{self, SynthSpec};
use hsdetect::{detectors, BackgroundModel, SampleMoments, Method, Region, Signature, SpectralCube};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn cube(pixels: Vec<f64>, bands: usize) -> SpectralCube {
    let n = pixels.len() / bands;
    SpectralCube::from_bip(Region::whole("s", 1, n).unwrap(), bands, pixels, None).unwrap()
}

fn random_scene(rng: &mut ChaCha8Rng, n: usize, bands: usize) -> Vec<f64> {
    // Correlated bands: x = mix · z + offset
    let mix: Vec<f64> = (0..bands * bands).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut out = Vec::with_capacity(n * bands);
    for _ in 0..n {
        let z: Vec<f64> = (0..bands).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for i in 0..bands {
            let v: f64 = (0..bands).map(|j| mix[i * bands + j] * z[j]).sum();
            out.push(z[i] + 0.3 * v + 2.0 + i as f64 * 0.1);
        }
    }
    out
}

fn raw_scores(det: &Detector, pixels: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; pixels.len() / det.bands()];
    det.score_pixels(pixels, &mut out).unwrap();
    out
}

/// Textbook formulas with explicit (LU) inverses of the ridged matrices.
struct Oracle {
    mu: DVector<f64>,
    sigma_inv: DMatrix<f64>,
    r_inv: DMatrix<f64>,
}

impl Oracle {
    fn new(m: &BackgroundModel) -> Self {
        let l = m.bands();
        let eye = DMatrix::<f64>::identity(l, l) * m.ridge();
        Self {
            mu: m.mean().clone(),
            sigma_inv: (m.covariance() + &eye).try_inverse().unwrap(),
            r_inv: (m.second_moment() + &eye).try_inverse().unwrap(),
        }
    }

    fn sam(x: &DVector<f64>, t: &DVector<f64>) -> f64 {
        -(x.dot(t) / (x.norm() * t.norm())).clamp(-1.0, 1.0).acos()
    }

    fn mf(&self, x: &DVector<f64>, t: &DVector<f64>) -> f64 {
        let tc = t - &self.mu;
        let xc = x - &self.mu;
        tc.dot(&(&self.sigma_inv * &xc)) / tc.dot(&(&self.sigma_inv * &tc))
    }

    fn ace(&self, x: &DVector<f64>, t: &DVector<f64>) -> f64 {
        let tc = t - &self.mu;
        let xc = x - &self.mu;
        let num = tc.dot(&(&self.sigma_inv * &xc));
        num * num / (tc.dot(&(&self.sigma_inv * &tc)) * xc.dot(&(&self.sigma_inv * &xc)))
    }

    fn cem(&self, x: &DVector<f64>, t: &DVector<f64>) -> f64 {
        t.dot(&(&self.r_inv * x)) / t.dot(&(&self.r_inv * t))
    }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}

#[test]
fn vectorized_kernels_match_scalar_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for _ in 0..50 {
        let px = random_scene(&mut rng, 50, 5);
        let c = cube(px.clone(), 5);
        let model = BackgroundModel::estimate_from(&c).unwrap();
        let oracle = Oracle::new(&model);
        let t: Vec<f64> = (0..5).map(|_| rng.gen_range(0.0..4.0)).collect();
        let tv = DVector::from_vec(t.clone());
        let sig = Signature::new(t, "t").unwrap();
        for method in Method::CLASSICAL {
            let det = Detector::prepare(method, &sig, Some(&model), CemVariant::Uncentered).unwrap();
            let got = raw_scores(&det, &px);
            for (i, x) in px.chunks_exact(5).enumerate() {
                let xv = DVector::from_column_slice(x);
                let want = match method {
                    Method::Sam => Oracle::sam(&xv, &tv),
                    Method::Mf => oracle.mf(&xv, &tv),
                    Method::Ace => oracle.ace(&xv, &tv),
                    Method::Cem => oracle.cem(&xv, &tv),
                    Method::Nn => unreachable!(),
                };
                assert!(close(got[i], want, 1e-12), "{method:?} pixel {i}: {} vs {want}", got[i]);
                // Scalar library path agrees as well.
                let scalar = match method {
                    Method::Sam => detectors::sam_score(x, &sig),
                    Method::Mf => detectors::mf_score(x, &model, &sig),
                    Method::Ace => detectors::ace_score(x, &model, &sig),
                    Method::Cem => detectors::cem_score(x, &model, &sig, false),
                    Method::Nn => unreachable!(),
                }
                .unwrap();
                assert!(close(got[i], scalar, 1e-12));
            }
        }
    }
}

#[test]
fn centered_cem_uses_centered_second_moment() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let px = random_scene(&mut rng, 80, 4);
    let model = BackgroundModel::estimate_from(&cube(px.clone(), 4)).unwrap();
    let t = DVector::from_vec(vec![3.0, 1.0, 2.5, 0.5]);
    let sig = Signature::new(t.iter().copied().collect(), "t").unwrap();
    let n = model.sample_count() as f64;
    let rc = model.covariance() * ((n - 1.0) / n) + DMatrix::identity(4, 4) * model.ridge();
    let rc_inv = rc.try_inverse().unwrap();
    let tc = &t - model.mean();
    let det = Detector::prepare(Method::Cem, &sig, Some(&model), CemVariant::Centered).unwrap();
    let got = raw_scores(&det, &px);
    for (i, x) in px.chunks_exact(4).enumerate() {
        let xc = DVector::from_column_slice(x) - model.mean();
        let want = tc.dot(&(&rc_inv * &xc)) / tc.dot(&(&rc_inv * &tc));
        assert!(close(got[i], want, 1e-12));
    }
    let at_target = detectors::cem_score(sig.values(), &model, &sig, true).unwrap();
    assert!((at_target - 1.0).abs() < 1e-8);
}

#[test]
fn unit_gain_and_ace_range() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let px = random_scene(&mut rng, 200, 6);
    let model = BackgroundModel::estimate_from(&cube(px.clone(), 6)).unwrap();
    let sig = Signature::new(vec![1.0, 4.0, 2.0, 0.5, 3.0, 2.0], "t").unwrap();
    assert!((detectors::mf_score(sig.values(), &model, &sig).unwrap() - 1.0).abs() < 1e-8);
    assert!((detectors::cem_score(sig.values(), &model, &sig, false).unwrap() - 1.0).abs() < 1e-8);
    let det = Detector::prepare(Method::Ace, &sig, Some(&model), CemVariant::default()).unwrap();
    assert!(raw_scores(&det, &px).iter().all(|&v| (0.0..=1.0).contains(&v)));
}

#[test]
fn dead_pixels_are_counted_not_fatal() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut px = random_scene(&mut rng, 30, 3);
    let model = BackgroundModel::estimate_from(&cube(px.clone(), 3)).unwrap();
    px[0..3].fill(0.0);
    let mu: Vec<f64> = model.mean().iter().copied().collect();
    px[3..6].copy_from_slice(&mu);
    let sig = Signature::new(vec![5.0, 1.0, 1.0], "t").unwrap();
    let c = cube(px, 3);
    let sam = Detector::prepare(Method::Sam, &sig, None, CemVariant::default()).unwrap();
    let map = detectors::score_region(&c, &sam).unwrap();
    assert_eq!(map.dead_pixels(), 1);
    assert_eq!(map.scores()[0], -std::f64::consts::FRAC_PI_2);
    let ace = Detector::prepare(Method::Ace, &sig, Some(&model), CemVariant::default()).unwrap();
    let mut raw = vec![0.0; 30];
    assert_eq!(ace.score_pixels(c.values(), &mut raw).unwrap(), 1);
    assert_eq!(raw[1], 0.0);
}

struct AffineRun {
    before: Vec<f64>,
    after: Vec<f64>,
    /// Largest ε/λ_min of the two background covariances.
    ridge_effect: f64,
}

/// Scores before and after mapping every pixel and the target through
/// x ↦ Ax + c, with statistics re-estimated each time. `ridge_scale`
/// overrides the default ridge as a multiple of trace(Σ)/L.
fn affine_run(seed: u64, method: Method, ridge_scale: Option<f64>) -> AffineRun {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let l = 5;
    let px = random_scene(&mut rng, 400, l);
    let t: Vec<f64> = (0..l).map(|_| rng.gen_range(0.0..4.0)).collect();
    let a = loop {
        let m = DMatrix::from_fn(l, l, |i, j| {
            rng.gen_range(-0.5..0.5) + if i == j { 2.0 } else { 0.0 }
        });
        if m.clone().try_inverse().is_some() {
            break m;
        }
    };
    let c = DVector::from_fn(l, |_, _| rng.gen_range(-3.0..3.0));
    let map = |x: &[f64]| -> Vec<f64> {
        (&a * DVector::from_column_slice(x) + &c).iter().copied().collect()
    };
    let px2: Vec<f64> = px.chunks_exact(l).flat_map(map).collect();
    let t2 = map(&t);

    let score = |pixels: &[f64], target: Vec<f64>| {
        let moments = SampleMoments::compute(&cube(pixels.to_vec(), l)).unwrap();
        let ridge = ridge_scale.map(|s| s * moments.covariance.trace() / l as f64);
        let model = BackgroundModel::from_moments(moments, ridge).unwrap();
        let lambda_min = model.covariance().clone().symmetric_eigenvalues().min();
        let sig = Signature::new(target, "t").unwrap();
        let det = Detector::prepare(method, &sig, Some(&model), CemVariant::default()).unwrap();
        (raw_scores(&det, pixels), model.ridge() / lambda_min)
    };
    let (before, e1) = score(&px, t);
    let (after, e2) = score(&px2, t2);
    AffineRun {
        before,
        after,
        ridge_effect: e1.max(e2),
    }
}

/// max |Δ| / max(|score|, 1); MF and ACE both have unit natural scale.
fn worst_relative(run: &AffineRun) -> f64 {
    run.before
        .iter()
        .zip(&run.after)
        .map(|(x, y)| (x - y).abs() / x.abs().max(1.0))
        .fold(0.0, f64::max)
}

#[test]
fn mf_and_ace_are_affine_invariant_without_ridge_bias() {
    for seed in 0..20 {
        for method in [Method::Mf, Method::Ace] {
            let run = affine_run(seed, method, Some(1e-14));
            let worst = worst_relative(&run);
            assert!(worst < 1e-9, "{method:?} seed {seed}: {worst:e}");
        }
    }
}

#[test]
fn default_ridge_breaks_affine_invariance_only_to_first_order() {
    for seed in 0..20 {
        for method in [Method::Mf, Method::Ace] {
            let run = affine_run(seed, method, None);
            let worst = worst_relative(&run);
            assert!(
                worst <= 4.0 * run.ridge_effect,
                "{method:?} seed {seed}: {worst:e} vs ε/λ_min {:e}",
                run.ridge_effect
            );
        }
    }
}

#[test]
fn normalization_keeps_ranking_metrics() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let px = random_scene(&mut rng, 300, 4);
    let labels: Vec<u8> = (0..300).map(|i| (i % 11 == 0) as u8).collect();
    let c = cube(px.clone(), 4);
    let model = BackgroundModel::estimate_from(&c).unwrap();
    let sig = Signature::new(vec![3.0, 2.0, 2.0, 3.0], "t").unwrap();
    for method in [Method::Mf, Method::Ace, Method::Cem] {
        let det = Detector::prepare(method, &sig, Some(&model), CemVariant::default()).unwrap();
        let raw = raw_scores(&det, &px);
        let map = detectors::score_region(&c, &det).unwrap();
        assert!(map.is_normalized());
        let r1 = RankedScores::new(&raw, &labels).unwrap();
        let r2 = RankedScores::new(map.scores(), &labels).unwrap();
        assert_eq!(r1.auc().unwrap(), r2.auc().unwrap());
        assert_eq!(r1.average_precision().unwrap(), r2.average_precision().unwrap());
    }
}

#[test]
fn ace_ranks_planted_targets_first_at_high_snr() {
    let mut spec = SynthSpec::new(40, 40, 16, 3);
    spec.plants = synth::random_plants(40, 40, 12, (1.0, 1.0), 3).unwrap();
    let alpha = synth::abundance_for_deflection(&spec, 12.0).unwrap();
    spec.plants.iter_mut().for_each(|p| p.abundance = alpha);
    let scene = synth::generate(&spec).unwrap();
    let model = BackgroundModel::estimate_from(&scene.cube).unwrap();
    let det = Detector::prepare(Method::Ace, &scene.signature, Some(&model), CemVariant::default()).unwrap();
    let map = detectors::score_region(&scene.cube, &det).unwrap();
    let mut order: Vec<usize> = (0..map.scores().len()).collect();
    order.sort_by(|&a, &b| map.scores()[b].total_cmp(&map.scores()[a]));
    let top: Vec<u8> = order[..12].iter().map(|&i| scene.mask.labels()[i]).collect();
    assert!(top.iter().all(|&y| y == 1), "{top:?}");
}

proptest! {
    #[test]
    fn sam_is_scale_invariant(
        x in prop::collection::vec(0.01f64..10.0, 6),
        t in prop::collection::vec(0.01f64..10.0, 6),
        c in 1e-3f64..1e3,
    ) {
        let sig = Signature::new(t, "t").unwrap();
        let scaled: Vec<f64> = x.iter().map(|v| v * c).collect();
        let a = detectors::sam_score(&x, &sig).unwrap();
        let b = detectors::sam_score(&scaled, &sig).unwrap();
        prop_assert!((a - b).abs() <= 1e-12);
        prop_assert!((-std::f64::consts::PI..=0.0).contains(&a));
    }
}

#[test]
fn scores_do_not_depend_on_chunking() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let l = 24;
    let px = random_scene(&mut rng, 2100, l);
    let model = BackgroundModel::estimate_from(&cube(px.clone(), l)).unwrap();
    let t: Vec<f64> = (0..l).map(|_| rng.gen_range(0.0..4.0)).collect();
    let sig = Signature::new(t, "t").unwrap();
    for method in Method::CLASSICAL {
        let det = Detector::prepare(method, &sig, Some(&model), CemVariant::default()).unwrap();
        let whole = raw_scores(&det, &px);
        for strip in [1, 7, 64, 1000] {
            let pieces: Vec<f64> = px
                .chunks(strip * l)
                .flat_map(|c| raw_scores(&det, c))
                .collect();
            assert_eq!(pieces, whole, "{method:?} strip {strip}");
        }
    }
}
