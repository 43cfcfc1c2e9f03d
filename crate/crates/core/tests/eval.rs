use proptest::prelude::*;
use rectrack_core::eval::{
    baseline_static, compare, curve_auc, ope_evaluate, robustness, run_ope, success_curve, vot_evaluate, EvalResult,
    PlaybackTracker, SequenceTracker, StaticTracker,
};
use rectrack_core::synthgen::{generate, PatchSource, SynthConfig};
use rectrack_core::{BoundingBox, Image, Result};

fn bx(x1: f64, y1: f64, x2: f64, y2: f64) -> BoundingBox {
    BoundingBox::new(x1, y1, x2, y2).unwrap()
}

fn blank(n: usize) -> Vec<Image> {
    vec![Image::new(8, 8, [0, 0, 0]); n]
}

#[test]
fn perfect_predictions() {
    let truth: Vec<_> = (0..10).map(|i| bx(i as f64, 0.0, i as f64 + 5.0, 5.0)).collect();
    let r = ope_evaluate(&truth, &truth, None).unwrap();
    assert_eq!(r.accuracy, 1.0);
    assert_eq!(r.auc, 1.0);
    assert_eq!(r.drops, 0);
}

#[test]
fn disjoint_predictions() {
    let truth = vec![bx(0.0, 0.0, 5.0, 5.0); 6];
    let pred = vec![bx(10.0, 10.0, 15.0, 15.0); 6];
    let r = ope_evaluate(&pred, &truth, None).unwrap();
    assert_eq!(r.accuracy, 0.0);
    assert_eq!(r.success[0], 1.0);
    assert!(r.success[1..].iter().all(|&v| v == 0.0));
    assert_eq!(r.drops, 1);
}

#[test]
fn half_perfect_half_disjoint() {
    let truth = vec![bx(0.0, 0.0, 5.0, 5.0); 8];
    let pred: Vec<_> = (0..8).map(|i| if i % 2 == 0 { truth[0] } else { bx(20.0, 20.0, 25.0, 25.0) }).collect();
    let r = ope_evaluate(&pred, &truth, None).unwrap();
    assert!(r.success[1..].iter().all(|&v| v == 0.5));
    // Counted by hand: 19 interior points at 0.5 plus endpoints 1.0 and 0.5.
    let expected = (19.0 * 0.5 + (1.0 + 0.5) / 2.0) / 20.0;
    assert!((r.auc - expected).abs() < 1e-12);
    assert!((r.auc - 0.5).abs() < 0.05);
    assert_eq!(r.drops, 4);
}

#[test]
fn length_mismatch_is_an_error() {
    let t = vec![bx(0.0, 0.0, 1.0, 1.0); 3];
    assert!(ope_evaluate(&t[..2], &t, None).is_err());
    assert!(ope_evaluate(&t, &t, Some(&[true, false])).is_err());
}

#[test]
fn robustness_formula() {
    assert_eq!(robustness(0, 300), 1.0);
    assert!((robustness(1, 300) - (-0.1f64).exp()).abs() < 1e-15);
    assert!((robustness(1, 300) - 0.905).abs() < 5e-4);
    let series: Vec<f64> = (0..10).map(|d| robustness(d, 100)).collect();
    assert!(series.windows(2).all(|w| w[1] < w[0]));
}

/// Returns the truth except on scripted frames, where it reports a far box.
struct ScriptedTracker {
    truth: Vec<BoundingBox>,
    fail_at: Vec<usize>,
    starts: Vec<usize>,
}

impl SequenceTracker for ScriptedTracker {
    fn start(&mut self, index: usize, _: &Image, _: &BoundingBox) -> Result<()> {
        self.starts.push(index);
        Ok(())
    }

    fn update(&mut self, index: usize, _: &Image) -> Result<BoundingBox> {
        Ok(if self.fail_at.contains(&index) { bx(1e4, 1e4, 1e4 + 1.0, 1e4 + 1.0) } else { self.truth[index] })
    }
}

#[test]
fn one_loss_in_three_hundred_frames() {
    let truth: Vec<_> = (0..300).map(|i| bx(i as f64 * 0.1, 0.0, i as f64 * 0.1 + 10.0, 10.0)).collect();
    let mut t = ScriptedTracker { truth: truth.clone(), fail_at: vec![100], starts: vec![] };
    let r = vot_evaluate(&mut t, &blank(300), &truth, None, 5).unwrap();
    assert_eq!(r.drops, 1);
    assert_eq!(t.starts, vec![0, 105]);
    // frames 1..=100 scored, 101..=105 skipped or restarted, 106..=299 scored
    assert_eq!(r.ious.len(), 100 + 194);
    assert!((r.robustness - (-0.1f64).exp()).abs() < 1e-15);
    assert!((r.accuracy - 293.0 / 294.0).abs() < 1e-12);
    assert!((r.average - (r.accuracy + r.robustness) / 2.0).abs() < 1e-15);
}

#[test]
fn playback_tracker_is_perfect() {
    let cfg = SynthConfig { frame_width: 64, frame_height: 64, ..SynthConfig::default() };
    for seed in 0..5 {
        let s = generate(&PatchSource::Procedural, &cfg, 40, seed).unwrap();
        let mut tr = PlaybackTracker { truth: s.truth.clone() };
        let r = vot_evaluate(&mut tr, &s.frames, &s.truth, Some(&s.occluded), 5).unwrap();
        assert_eq!(r.drops, 0);
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.robustness, 1.0);
        assert_eq!(r.average, 1.0);
        let boxes = run_ope(&mut tr, &s.frames, &s.truth[0]).unwrap();
        assert_eq!(boxes, s.truth[1..]);
    }
}

#[test]
fn static_baseline_on_static_scene() {
    let b = bx(3.0, 4.0, 9.0, 12.0);
    let boxes = baseline_static(&blank(7), &b);
    assert_eq!(boxes, vec![b; 6]);
    let r = ope_evaluate(&boxes, &[b; 6], None).unwrap();
    assert_eq!(r.accuracy, 1.0);
    let mut st = StaticTracker::default();
    assert_eq!(run_ope(&mut st, &blank(7), &b).unwrap(), boxes);
}

#[test]
fn static_baseline_on_linear_motion() {
    let (w, s) = (10.0, 2.0);
    let truth: Vec<_> = (0..12).map(|t| bx(s * t as f64, 0.0, s * t as f64 + w, w)).collect();
    let pred = baseline_static(&blank(12), &truth[0]);
    let r = ope_evaluate(&pred, &truth[1..], None).unwrap();
    for (k, v) in r.ious.iter().enumerate() {
        let d = s * (k + 1) as f64;
        let expected = if d >= w { 0.0 } else { (w - d) / (w + d) };
        assert!((v - expected).abs() < 1e-12, "t={} {v} vs {expected}", k + 1);
    }
    assert_eq!(r.ious[4..].iter().filter(|&&v| v == 0.0).count(), r.ious.len() - 4);
}

#[test]
fn report_ordering_and_columns() {
    let truth = vec![bx(0.0, 0.0, 4.0, 4.0); 4];
    let a = ope_evaluate(&truth, &truth, Some(&[false, true, false, true])).unwrap();
    let b = ope_evaluate(&truth, &truth, Some(&[false; 4])).unwrap();
    let report = compare(&[("zeta".into(), a.clone()), ("alpha".into(), b)]);
    let names: Vec<&str> = report.rows.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(names, ["alpha", "zeta"]);
    let csv = report.summary_csv();
    let lines: Vec<&str> = csv.lines().collect();
    assert!(lines[0].starts_with('#'));
    assert_eq!(lines[1], "method,accuracy,drops,robustness,average,auc,auc_occluded");
    assert_eq!(lines[2], "alpha,1,0,1,1,1,");
    assert_eq!(lines[3], "zeta,1,0,1,1,1,1");
    let single = compare(&[("only".into(), ope_evaluate(&truth, &truth, None).unwrap())]);
    let csv = single.summary_csv();
    assert_eq!(csv.lines().count(), 3);
    assert!(!csv.contains("auc_occluded"));
    let curve = single.success_csv();
    assert_eq!(curve.lines().count(), 22);
    assert!(curve.lines().nth(1).unwrap().starts_with("only,0.00,1"));
}

#[test]
fn pooled_matches_concatenation() {
    let t = vec![bx(0.0, 0.0, 4.0, 4.0); 3];
    let p = vec![bx(1.0, 0.0, 5.0, 4.0); 3];
    let a = ope_evaluate(&p, &t, None).unwrap();
    let b = ope_evaluate(&t[..2], &t[..2], None).unwrap();
    let pooled = EvalResult::pooled(&[a.clone(), b]).unwrap();
    let mut both = p.clone();
    both.extend_from_slice(&t[..2]);
    let mut truth = t.clone();
    truth.extend_from_slice(&t[..2]);
    let direct = ope_evaluate(&both, &truth, None).unwrap();
    assert_eq!(pooled.ious, direct.ious);
    assert_eq!(pooled.auc, direct.auc);
    assert_eq!(pooled.frames, 5);
}

fn box_strategy() -> impl Strategy<Value = BoundingBox> {
    (0.0f64..20.0, 0.0f64..20.0, 0.5f64..15.0, 0.5f64..15.0).prop_map(|(x, y, w, h)| bx(x, y, x + w, y + h))
}

proptest! {
    #[test]
    fn curve_and_auc_properties(pairs in prop::collection::vec((box_strategy(), box_strategy()), 1..60)) {
        let (pred, truth): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
        let r = ope_evaluate(&pred, &truth, None).unwrap();
        prop_assert!(r.success.windows(2).all(|w| w[1] <= w[0]));
        prop_assert!((0.0..=1.0).contains(&r.auc) && (0.0..=1.0).contains(&r.accuracy));
        prop_assert!((r.auc - r.accuracy).abs() <= 0.05 + 1e-12, "auc {} mean {}", r.auc, r.accuracy);
        prop_assert_eq!(curve_auc(&success_curve(&r.ious)), r.auc);
    }

    #[test]
    fn occlusion_mask_partitions_frames(
        pairs in prop::collection::vec((box_strategy(), box_strategy(), any::<bool>()), 1..40),
    ) {
        let pred: Vec<_> = pairs.iter().map(|p| p.0).collect();
        let truth: Vec<_> = pairs.iter().map(|p| p.1).collect();
        let mask: Vec<bool> = pairs.iter().map(|p| p.2).collect();
        let inverted: Vec<bool> = mask.iter().map(|m| !m).collect();
        let occ = ope_evaluate(&pred, &truth, Some(&mask)).unwrap();
        let vis = ope_evaluate(&pred, &truth, Some(&inverted)).unwrap();
        let n_occ = mask.iter().filter(|&&m| m).count();
        let all = occ.ious.len();
        // success over occluded + visible frames recombines into all frames
        let occ_curve = occ.success_occluded.clone().unwrap_or(vec![0.0; 21]);
        let vis_curve = vis.success_occluded.clone().unwrap_or(vec![0.0; 21]);
        for i in 0..21 {
            let recombined = occ_curve[i] * n_occ as f64 + vis_curve[i] * (all - n_occ) as f64;
            prop_assert!((recombined - occ.success[i] * all as f64).abs() < 1e-9);
        }
        prop_assert_eq!(occ.auc_occluded.is_some(), n_occ > 0);
        prop_assert_eq!(vis.auc_occluded.is_some(), n_occ < all);
    }

    #[test]
    fn robustness_decreases_with_drops(frames in 1usize..1000, drops in 0usize..50) {
        prop_assert!(robustness(drops + 1, frames) < robustness(drops, frames));
    }
}
