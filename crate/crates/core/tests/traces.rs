use proptest::prelude::*;
use tvg_anchor::{check_format, parse_trace, render_trace, TimeInterval, TraceBuilder};

/// Anchor contents found by a plain substring walk over the think block.
fn naive_anchor_texts(raw: &str) -> Vec<String> {
    let think_start = raw.find("<think>").unwrap() + "<think>".len();
    let think_end = raw.find("</think>").unwrap();
    let mut rest = &raw[think_start..think_end];
    let mut out = Vec::new();
    while let Some(open) = rest.find("<timestamp>") {
        let after = &rest[open + "<timestamp>".len()..];
        let close = after.find("</timestamp>").unwrap();
        out.push(after[..close].to_string());
        rest = &after[close + "</timestamp>".len()..];
    }
    out
}

fn interval() -> impl Strategy<Value = TimeInterval> {
    (0u32..100_000, 0u32..100_000).prop_map(|(a, len)| {
        let start = a as f64 / 1000.0;
        TimeInterval::new(start, start + len as f64 / 1000.0).unwrap()
    })
}

fn prose() -> impl Strategy<Value = String> {
    "[a-z ,.]{0,20}"
}

proptest! {
    #[test]
    fn anchors_keep_document_order(
        steps in prop::collection::vec((prose(), interval()), 1..6),
        answer in interval(),
    ) {
        let mut builder = TraceBuilder::new();
        for (text, anchor) in &steps {
            builder = builder.reason(text).anchor(*anchor);
        }
        let raw = builder.answer(answer).render();
        let trace = parse_trace(&raw);
        prop_assert!(trace.matches());
        let expected: Vec<TimeInterval> = naive_anchor_texts(&raw)
            .iter()
            .map(|t| tvg_anchor::parse_interval(t).unwrap())
            .collect();
        prop_assert_eq!(trace.anchors(), expected.as_slice());
        prop_assert_eq!(trace.verdict().anchor_count, steps.len());
        let direct: Vec<TimeInterval> = steps.iter().map(|(_, a)| *a).collect();
        prop_assert_eq!(trace.anchors(), direct.as_slice());
    }

    #[test]
    fn render_then_parse_is_identity(
        steps in prop::collection::vec((prose(), interval()), 1..5),
        answer in interval(),
        separator in "[ \n]{0,3}",
    ) {
        // Hand-written surface forms, not the canonical one.
        let mut raw = String::from("<think>");
        for (i, (text, a)) in steps.iter().enumerate() {
            let body = match i % 4 {
                0 => format!("{} to {}", a.start(), a.end()),
                1 => format!("[{}, {}]", a.start(), a.end()),
                2 => format!("from {}s to {}s", a.start(), a.end()),
                _ => format!("{} - {}", a.start(), a.end()),
            };
            raw.push_str(&format!("{text}<timestamp>{body}</timestamp>"));
        }
        raw.push_str(&format!("</think>{separator}<answer>{}, {}</answer>", answer.start(), answer.end()));
        let trace = parse_trace(&raw);
        prop_assert!(trace.matches());
        let again = parse_trace(&render_trace(&trace).unwrap());
        prop_assert!(again.matches());
        prop_assert_eq!(again.anchors(), trace.anchors());
        prop_assert_eq!(again.answer(), trace.answer());
        prop_assert_eq!(again.verdict().anchor_count, trace.verdict().anchor_count);
    }

    #[test]
    fn parse_never_panics(bytes in prop::collection::vec(any::<u8>(), 0..300)) {
        let text = String::from_utf8_lossy(&bytes);
        let trace = parse_trace(&text);
        prop_assert_eq!(trace.anchors().len(), trace.verdict().anchor_count);
        if trace.matches() {
            prop_assert!(trace.verdict().anchor_count >= 1);
            prop_assert!(trace.verdict().failure_reason.is_none());
        }
    }

    #[test]
    fn tag_soup_never_panics(parts in prop::collection::vec(prop::sample::select(vec![
        "<think>", "</think>", "<answer>", "</answer>", "<timestamp>", "</timestamp>",
        "1 to 2", "3.5s to 4s", "x", " ", "[0, 0]", "<", ">", "</",
    ]), 0..30)) {
        let text: String = parts.concat();
        let trace = parse_trace(&text);
        prop_assert_eq!(trace.anchors().len(), trace.verdict().anchor_count);
    }

    #[test]
    fn stray_timestamp_breaks_format(
        a in interval(),
        position in 0usize..3,
    ) {
        let block = format!("<timestamp>{a}</timestamp>");
        let inner = format!("<think><timestamp>{a}</timestamp></think>");
        let answer = format!("<answer>{a}</answer>");
        let raw = match position {
            0 => format!("{block}{inner}{answer}"),
            1 => format!("{inner}{block}{answer}"),
            _ => format!("{inner}{answer}{block}"),
        };
        prop_assert!(!check_format(&raw).matches);
    }
}

#[test]
fn three_anchor_document_order() {
    let raw = "<think>a <timestamp>0 to 30</timestamp> b <timestamp>5 to 20</timestamp> \
               c <timestamp>8 to 12</timestamp></think><answer>8 to 12</answer>";
    let trace = parse_trace(raw);
    assert_eq!(trace.verdict().anchor_count, 3);
    let expected: Vec<TimeInterval> = naive_anchor_texts(raw)
        .iter()
        .map(|t| tvg_anchor::parse_interval(t).unwrap())
        .collect();
    assert_eq!(trace.anchors(), expected.as_slice());
}
