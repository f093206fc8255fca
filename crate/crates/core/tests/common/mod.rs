//! Exact-arithmetic oracles shared by the integration tests.
//!
//! Intervals are given in tenths of a second so every quantity is an exact
//! rational; nothing here calls into the crate's reward code.
#![allow(dead_code)]

use num_rational::Ratio;

pub type Q = Ratio<i64>;

/// Soft IoU of two intervals given in tenths of a second.
pub fn soft_iou_tenths(pred: (i64, i64), gt: (i64, i64)) -> Q {
    let inter = pred.1.min(gt.1) - pred.0.max(gt.0);
    let union = pred.1.max(gt.1) - pred.0.min(gt.0);
    Q::new(inter, union)
}

pub fn standard_iou_tenths(pred: (i64, i64), gt: (i64, i64)) -> Q {
    let s = soft_iou_tenths(pred, gt);
    if s < Q::from_integer(0) {
        Q::from_integer(0)
    } else {
        s
    }
}

/// Total reward of a format-valid trace, recomputed term by term.
pub fn total_tenths(anchors: &[(i64, i64)], answer: (i64, i64), gt: (i64, i64)) -> Q {
    let sious: Vec<Q> = anchors.iter().map(|a| soft_iou_tenths(*a, gt)).collect();
    let mut tar1 = Q::from_integer(0);
    for (i, s) in sious.iter().enumerate() {
        tar1 += Q::from_integer(i as i64 + 1) * s;
    }
    let s = anchors.len() as i64;
    let tar2 = Q::from_integer((s - 2) * (s - 2));
    let mut tar3 = Q::from_integer(0);
    for w in sious.windows(2) {
        tar3 += Q::from_integer(if w[1] > w[0] { 1 } else { -1 });
    }
    Q::from_integer(3) + soft_iou_tenths(answer, gt) + tar1 - Q::from_integer(5) * tar2 + tar3
}

pub fn to_f64(q: Q) -> f64 {
    *q.numer() as f64 / *q.denom() as f64
}

/// Length of the overlap of `[a, b]` and `[c, d]` measured by sweeping a
/// fine grid of sample points; independent of any min/max formula.
pub fn swept_overlap(pred: (f64, f64), gt: (f64, f64), step: f64) -> (f64, f64) {
    let lo = pred.0.min(gt.0);
    let hi = pred.1.max(gt.1);
    let n = ((hi - lo) / step).round() as usize;
    let mut inter = 0.0;
    let mut union = 0.0;
    for k in 0..n {
        let t = lo + (k as f64 + 0.5) * step;
        let in_p = t >= pred.0 && t <= pred.1;
        let in_g = t >= gt.0 && t <= gt.1;
        if in_p && in_g {
            inter += step;
        }
        if in_p || in_g {
            union += step;
        }
    }
    (inter, union)
}

/// A synthetic corpus line described in tenths of a second.
#[derive(Debug, Clone)]
pub struct FixtureTrace {
    pub anchors: Vec<(i64, i64)>,
    pub answer: (i64, i64),
    pub gt: (i64, i64),
    /// When false the text has no tags at all.
    pub tagged: bool,
}

fn tenths_text(v: i64) -> String {
    format!("{}.{}", v / 10, v % 10)
}

impl FixtureTrace {
    pub fn raw_text(&self) -> String {
        let answer = format!(
            "{} to {}",
            tenths_text(self.answer.0),
            tenths_text(self.answer.1)
        );
        if !self.tagged {
            return format!("The event happens at {answer}.");
        }
        let mut raw = String::from("<think>");
        for (i, a) in self.anchors.iter().enumerate() {
            raw.push_str(&format!(
                "step {i} <timestamp>{} to {}</timestamp> ",
                tenths_text(a.0),
                tenths_text(a.1)
            ));
        }
        raw.push_str(&format!("</think>\n<answer>{answer}</answer>"));
        raw
    }

    /// Filter decision recomputed in exact arithmetic: anchor count, then
    /// total, then first and second anchor quality, all bounds strict.
    pub fn expected_reason(&self) -> Option<&'static str> {
        if !self.tagged || self.anchors.len() < 2 {
            return Some("anchor-count");
        }
        let total = total_tenths(&self.anchors, self.answer, self.gt);
        if total <= Q::new(64, 10) {
            return Some("total-reward");
        }
        if soft_iou_tenths(self.anchors[0], self.gt) <= Q::new(1, 2) {
            return Some("anchor1-quality");
        }
        if soft_iou_tenths(self.anchors[1], self.gt) <= Q::new(7, 10) {
            return Some("anchor2-quality");
        }
        None
    }
}

/// Boundary triples `(answer, anchor1, anchor2)` of prefix lengths against a
/// 10 s ground truth whose total is exactly 6.4.
pub const TOTAL_BOUNDARY: [(i64, i64, i64); 10] = [
    (47, 51, 71),
    (45, 51, 72),
    (46, 52, 71),
    (1, 53, 93),
    (30, 54, 78),
    (21, 55, 82),
    (20, 60, 80),
    (13, 63, 82),
    (10, 72, 79),
    (1, 79, 80),
];

/// 186 traces, 30 of which pass the default filter. Thirty further records
/// sit exactly on the total, first-anchor and second-anchor thresholds.
pub fn filter_corpus() -> Vec<FixtureTrace> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(186);
    let gt = (0, 100);
    let prefix = |len: i64| (0, len);
    let mut out = Vec::new();
    for _ in 0..30 {
        let s1 = rng.gen_range(52..=95);
        let s2 = rng.gen_range(s1.max(71) + 1..=100);
        out.push(FixtureTrace {
            anchors: vec![prefix(s1), prefix(s2)],
            answer: prefix(s2),
            gt,
            tagged: true,
        });
    }
    for &(a, s1, s2) in &TOTAL_BOUNDARY {
        out.push(FixtureTrace {
            anchors: vec![prefix(s1), prefix(s2)],
            answer: prefix(a),
            gt,
            tagged: true,
        });
    }
    for _ in 0..10 {
        let s2 = rng.gen_range(72..=100);
        out.push(FixtureTrace {
            anchors: vec![prefix(50), prefix(s2)],
            answer: prefix(s2),
            gt,
            tagged: true,
        });
    }
    for _ in 0..10 {
        let s1 = rng.gen_range(52..=69);
        out.push(FixtureTrace {
            anchors: vec![prefix(s1), prefix(70)],
            answer: prefix(70),
            gt,
            tagged: true,
        });
    }
    // Shifted, noisier rejects kept well away from every threshold.
    while out.len() < 186 {
        let shift: i64 = rng.gen_range(0..500);
        let g = (shift, shift + 100);
        let span = |rng: &mut rand_chacha::ChaCha8Rng| {
            let a = rng.gen_range((shift - 80).max(0)..shift + 150);
            let b = rng.gen_range(a + 1..a + 200);
            (a, b)
        };
        let kind = out.len() % 5;
        let trace = match kind {
            0 => FixtureTrace {
                anchors: vec![span(&mut rng)],
                answer: span(&mut rng),
                gt: g,
                tagged: true,
            },
            1 => FixtureTrace {
                anchors: vec![],
                answer: span(&mut rng),
                gt: g,
                tagged: false,
            },
            2 => {
                let anchors = (0..3).map(|_| span(&mut rng)).collect::<Vec<_>>();
                FixtureTrace {
                    answer: anchors[2],
                    anchors,
                    gt: g,
                    tagged: true,
                }
            }
            3 => {
                // Degrading second anchor.
                let s1 = rng.gen_range(80..=100);
                let s2 = rng.gen_range(55..s1 - 5);
                let a = (shift, shift + s1);
                let b = (shift, shift + s2);
                FixtureTrace {
                    anchors: vec![a, b],
                    answer: b,
                    gt: g,
                    tagged: true,
                }
            }
            _ => FixtureTrace {
                anchors: vec![span(&mut rng), span(&mut rng)],
                answer: span(&mut rng),
                gt: g,
                tagged: true,
            },
        };
        // Random two-anchor records must not land within reach of a threshold.
        if (kind == 2 || kind == 4) && near_threshold(&trace) {
            continue;
        }
        out.push(trace);
    }
    out
}

fn near_threshold(t: &FixtureTrace) -> bool {
    let eps = Q::new(1, 100);
    let close = |x: Q, c: Q| {
        let d = x - c;
        d < eps && -d < eps
    };
    close(total_tenths(&t.anchors, t.answer, t.gt), Q::new(64, 10))
        || close(soft_iou_tenths(t.anchors[0], t.gt), Q::new(1, 2))
        || close(soft_iou_tenths(t.anchors[1], t.gt), Q::new(7, 10))
}
