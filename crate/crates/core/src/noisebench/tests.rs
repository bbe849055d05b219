use super::*;
use crate::fgd::ExtractorConfig;
use crate::pose::{dirvecs_to_coords, DirVecSequence, Skeleton, REST_DIRECTIONS};
use proptest::prelude::*;

pub(crate) fn wobble_poses(n: usize, t: usize, seed: u64) -> Vec<PoseSequence> {
    let mut rng = rng_from(seed);
    let skel = Skeleton::standard();
    (0..n)
        .map(|_| {
            let amp: f64 = rng.random_range(0.05..0.6);
            let phase: f64 = rng.random_range(0.0..6.0);
            let frames = (0..t)
                .map(|i| {
                    let mut f = REST_DIRECTIONS;
                    for (b, dir) in f.iter_mut().enumerate() {
                        dir[0] += amp * (0.3 * i as f64 + phase + b as f64).sin();
                        dir[1] += amp * 0.3 * (0.5 * i as f64 + 2.0 * b as f64).sin();
                        dir[2] += amp * 0.5 * (0.2 * i as f64 + phase * b as f64).cos();
                    }
                    f
                })
                .collect();
            let dirs = DirVecSequence { frames, fps: 15.0 }.normalized().unwrap();
            dirvecs_to_coords(&dirs, &skel, [0.0; 3]).unwrap()
        })
        .collect()
}

fn diff(a: &PoseSequence, b: &PoseSequence) -> Vec<f64> {
    a.frames.iter().zip(&b.frames).flat_map(|(x, y)| (0..30).map(move |k| y[k / 3][k % 3] - x[k / 3][k % 3])).collect()
}

#[test]
fn neutral_settings_are_exact_identities() {
    let w = &wobble_poses(3, 34, 1);
    for (i, s) in w.iter().enumerate() {
        assert_eq!(&apply_gaussian(s, 0.0, i as u64), s);
        assert_eq!(&apply_salt_pepper(s, 0.0, i as u64), s);
        assert_eq!(&apply_temporal(s, 0, i as u64).unwrap().0, s);
    }
    let pairs: Vec<(usize, PoseSequence)> = w.iter().cloned().enumerate().collect();
    let (same, src) = apply_mismatch(&pairs, 0.0, 4).unwrap();
    assert_eq!(same, pairs);
    assert_eq!(src, vec![0, 1, 2]);
}

#[test]
fn gaussian_offset_is_shared_and_scaled() {
    let s = &wobble_poses(1, 34, 2)[0];
    let a = apply_gaussian(s, 1e-3, 7);
    let b = apply_gaussian(s, 4e-3, 7);
    let (da, db) = (diff(s, &a), diff(s, &b));
    for k in 0..30 {
        // same offset in every frame
        for i in 1..34 {
            assert!((da[i * 30 + k] - da[k]).abs() < 1e-12);
        }
        assert!((db[k] - 2.0 * da[k]).abs() < 1e-12);
    }
    for i in 1..34 {
        for j in 0..10 {
            for ax in 0..3 {
                let v0 = s.frames[i][j][ax] - s.frames[i - 1][j][ax];
                let v1 = a.frames[i][j][ax] - a.frames[i - 1][j][ax];
                assert!((v0 - v1).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn salt_pepper_values() {
    for seed in 0..50 {
        let x = salt_pepper_offsets(1.0, seed);
        assert!(x.iter().all(|v| v.abs() == SALT_PEPPER_MAGNITUDE));
        let low = salt_pepper_offsets(0.1, seed);
        // hits at a lower ζ are a subset of hits at a higher one
        let high = salt_pepper_offsets(0.2, seed);
        for k in 0..30 {
            if low[k] != 0.0 {
                assert_eq!(low[k].abs(), SALT_PEPPER_MAGNITUDE);
                assert_ne!(high[k], 0.0);
            }
        }
    }
    let s = &wobble_poses(1, 34, 2)[0];
    let d = diff(s, &apply_salt_pepper(s, 1.0, 3));
    assert!(d.iter().all(|v| (v.abs() - 0.2).abs() < 1e-12));
}

#[test]
fn temporal_touches_exactly_zeta_frames() {
    let s = &wobble_poses(1, 34, 3)[0];
    for zeta in [1usize, 3, 10, 34] {
        for seed in 0..10 {
            let (out, r) = apply_temporal(s, zeta, seed).unwrap();
            assert!(r + zeta <= 34);
            let changed: Vec<usize> = (0..34).filter(|&i| out.frames[i] != s.frames[i]).collect();
            assert_eq!(changed, (r..r + zeta).collect::<Vec<_>>());
        }
    }
    assert!(apply_temporal(s, 35, 0).is_err());
}

#[test]
fn eigenpose_transform() {
    let w = wobble_poses(6, 34, 4);
    let m = fit_eigenposes(&w, "test").unwrap();
    let gram = m.components.transpose() * &m.components;
    assert!((gram - DMatrix::<f64>::identity(30, 30)).amax() < 1e-9);
    let mean = unflatten(&m.mean);
    for s in &w {
        let one = apply_multiplicative(s, 1.0, &m);
        assert!(diff(s, &one).iter().all(|v| v.abs() < 1e-9));
        let zero = apply_multiplicative(s, 0.0, &m);
        for f in &zero.frames {
            for j in 0..10 {
                for a in 0..3 {
                    assert!((f[j][a] - mean[j][a]).abs() < 1e-9);
                }
            }
        }
        let two = apply_multiplicative(s, 2.0, &m);
        for (p, q) in s.frames.iter().zip(&two.frames) {
            let dp = (flatten(p) - &m.mean).norm();
            let dq = (flatten(q) - &m.mean).norm();
            assert!((dq - 2.0 * dp).abs() < 1e-6);
        }
    }
    assert!(matches!(fit_eigenposes(&w[..1][..].iter().map(|s| PoseSequence { frames: s.frames[..20].to_vec(), fps: 15.0 }).collect::<Vec<_>>(), "x"), Err(Error::InsufficientFrames { .. })));

    // two coordinates locked together leave the covariance one rank short
    let mut locked = w.clone();
    for s in &mut locked {
        for f in &mut s.frames {
            f[9][0] = f[8][0];
        }
    }
    match fit_eigenposes(&locked, "x") {
        Err(Error::RankDeficient { rank, needed }) => assert_eq!((rank, needed), (26, 27)),
        other => panic!("{other:?}"),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn multiplicative_is_linear_in_centred_pose(lambda in -3.0f64..3.0, zeta in 0.0f64..3.0, frame in 0usize..34) {
        let w = wobble_poses(4, 34, 5);
        let m = fit_eigenposes(&w, "test").unwrap();
        // centred pose p_c, and the transform acting on mean + λ p_c
        let p = flatten(&w[1].frames[frame]) - &m.mean;
        let apply = |v: &DVector<f64>| flatten(&m.from_eigen(&(m.components.transpose() * v * zeta))) - &m.mean;
        let lhs = apply(&(&p * lambda));
        let rhs = apply(&p) * lambda;
        prop_assert!((lhs - rhs).amax() < 1e-6);
    }

    #[test]
    fn mismatch_preserves_multisets(n in 2usize..20, zeta in 0.0f64..=1.0, seed in 0u64..1000) {
        let w = wobble_poses(n, 5, seed);
        let pairs: Vec<(usize, PoseSequence)> = w.iter().cloned().enumerate().collect();
        let (out, src) = apply_mismatch(&pairs, zeta, seed).unwrap();
        let mut sorted = src.clone();
        sorted.sort_unstable();
        prop_assert_eq!(sorted, (0..n).collect::<Vec<_>>());
        for (i, (speech, gesture)) in out.iter().enumerate() {
            prop_assert_eq!(*speech, i);
            prop_assert_eq!(gesture, &w[src[i]]);
        }
        let moved = src.iter().enumerate().filter(|(i, s)| *i != **s).count();
        let m = (zeta * n as f64).round() as usize;
        prop_assert_eq!(moved, if m == 1 { 2 } else { m });
    }
}

#[test]
fn full_mismatch_is_a_derangement() {
    for seed in 0..50 {
        let w = wobble_poses(7, 3, seed);
        let pairs: Vec<(usize, PoseSequence)> = w.into_iter().enumerate().collect();
        let (_, src) = apply_mismatch(&pairs, 1.0, seed).unwrap();
        assert!(src.iter().enumerate().all(|(i, s)| i != *s));
    }
    let one = vec![((), wobble_poses(1, 3, 0).remove(0))];
    assert!(apply_mismatch(&one, 1.0, 0).is_err());
    assert!(apply_mismatch(&one, 1.5, 0).is_err());
}

#[test]
fn spec_validation() {
    assert!(NoiseSpec { kind: NoiseKind::SaltPepper, zeta: 1.5, seed: 0 }.validate().is_err());
    assert!(NoiseSpec { kind: NoiseKind::Temporal, zeta: 2.5, seed: 0 }.validate().is_err());
    assert!(NoiseSpec { kind: NoiseKind::Gaussian, zeta: -1.0, seed: 0 }.validate().is_err());
    assert!(NoiseSpec { kind: NoiseKind::Multiplicative, zeta: 2.0, seed: 0 }.validate().is_ok());
    assert_eq!("salt_pepper".parse::<NoiseKind>().unwrap(), NoiseKind::SaltPepper);
    assert!("pink".parse::<NoiseKind>().is_err());
}

#[test]
fn validation_runner() {
    let w = wobble_poses(100, 34, 8);
    let ex = FeatureExtractor::new(ExtractorConfig { channels: 8, latent_dim: 6, ..Default::default() }).unwrap();
    let grid = default_grid();
    let report = run_validation(&w, &grid, &ex, "untrained", 3).unwrap();
    assert_eq!(report.rows.len(), grid.values().map(Vec::len).sum::<usize>());
    for kind in NoiseKind::ALL {
        let clean = report.curve(kind).into_iter().find(|r| r.zeta == kind.neutral()).unwrap();
        assert!(clean.maej < 1e-6 && clean.mae_accel < 1e-6 && clean.fgd < 1e-4, "{clean:?}");
    }
    let g = report.curve(NoiseKind::Gaussian);
    assert!(g.windows(2).all(|p| p[1].maej >= p[0].maej));
    assert_eq!(report, run_validation(&w, &grid, &ex, "untrained", 3).unwrap());
    let csv = String::from_utf8(report.to_csv().unwrap()).unwrap();
    assert!(csv.starts_with("kind,zeta,fgd,maej,mae_accel\n"));
    assert!(run_validation(&w[..50], &grid, &ex, "untrained", 3).is_err());
}
