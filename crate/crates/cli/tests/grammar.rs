use kqlab::expr::{BinOp, Func, ParseErrorKind};
use kqlab::{parse_weight, WeightExpr};
use proptest::prelude::*;

const CORPUS: &str = include_str!("data/weights.txt");

fn parse_slope(t: &str) -> Option<f64> {
    (t != "none").then(|| t.parse().unwrap())
}

#[test]
fn corpus() {
    let mut seen = 0;
    for line in CORPUS.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty()) {
        let f: Vec<&str> = line.split(" | ").collect();
        let text = f[1].replace("\\n", "\n");
        match f[0] {
            "ok" => {
                let e = parse_weight(&text).unwrap_or_else(|err| panic!("{text:?}: {err}"));
                let want: f64 = f[2].parse().unwrap();
                let got = e.eval(0.7);
                assert!((got - want).abs() <= 1e-14 * (1.0 + want.abs()), "{text:?}: {got} vs {want}");
                let slopes = match (parse_slope(f[3]), parse_slope(f[4])) {
                    (Some(l), Some(r)) => Some((l, r)),
                    _ => None,
                };
                assert_eq!(e.slopes(), slopes, "{text:?}");
            }
            "err" => {
                let err = parse_weight(&text).expect_err(&text);
                let kind = match err.kind {
                    ParseErrorKind::Syntax(_) => "syntax",
                    ParseErrorKind::UnknownIdentifier(_) => "unknown",
                    ParseErrorKind::Arity { .. } => "arity",
                };
                assert_eq!(kind, f[2], "{text:?}: {err}");
                assert_eq!((err.line, err.column), (f[3].parse().unwrap(), f[4].parse().unwrap()), "{text:?}: {err}");
            }
            other => panic!("bad corpus tag {other}"),
        }
        seen += 1;
    }
    assert!(seen >= 30);
}

fn literal() -> impl Strategy<Value = f64> {
    prop_oneof![0.0..100.0f64, (0u32..20).prop_map(f64::from), Just(1e-7), Just(2.5e12)]
}

fn expr() -> impl Strategy<Value = WeightExpr> {
    let leaf = prop_oneof![literal().prop_map(WeightExpr::Num), Just(WeightExpr::Var)];
    let lse = (proptest::collection::vec((-4.0..4.0f64, -4.0..4.0f64), 1..4), 0.01..3.0f64)
        .prop_map(|(terms, tau)| WeightExpr::Lse { terms, tau });
    let leaf = prop_oneof![4 => leaf, 1 => lse];
    leaf.prop_recursive(5, 32, 2, |inner| {
        let op = prop_oneof![Just(BinOp::Add), Just(BinOp::Sub), Just(BinOp::Mul), Just(BinOp::Div)];
        let unary = prop_oneof![
            Just(Func::Log),
            Just(Func::Exp),
            Just(Func::Tanh),
            Just(Func::Sech),
            Just(Func::Fs)
        ];
        let binary = prop_oneof![Just(Func::Min), Just(Func::Max)];
        prop_oneof![
            inner.clone().prop_map(|e| WeightExpr::Neg(Box::new(e))),
            (op, inner.clone(), inner.clone()).prop_map(|(o, l, r)| WeightExpr::Bin(o, Box::new(l), Box::new(r))),
            (unary, inner.clone()).prop_map(|(f, a)| WeightExpr::Call(f, vec![a])),
            (binary, inner.clone(), inner).prop_map(|(f, a, b)| WeightExpr::Call(f, vec![a, b])),
        ]
    })
}

proptest! {
    #[test]
    fn display_round_trips(e in expr()) {
        let text = e.to_string();
        let back = parse_weight(&text).unwrap_or_else(|err| panic!("{text:?}: {err}"));
        prop_assert_eq!(back, e);
    }
}
