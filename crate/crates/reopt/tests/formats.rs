use proptest::prelude::*;
use reopt::cvrplib::{parse_instance, write_instance, ParseError};
use reopt::formats::{parse_solution_text, write_solution_text, ModelDoc, ModelMeta, ScenarioSpec};
use reopt_core::features::Scaler;
use reopt_core::instance::{synthetic, DemandDistribution};
use reopt_core::solver::best_of_k;
use reopt_core::{Forced, IntervalClass, Network, Rounding};

const SMALL: &str = "NAME : tiny
COMMENT : three clients
TYPE : CVRP
DIMENSION : 4
EDGE_WEIGHT_TYPE : EUC_2D
CAPACITY : 10
NODE_COORD_SECTION
 7 0 0
 3 3 4
 9 6 8
 5 0 5
DEMAND_SECTION
7 0
3 4
9 5
5 6
DEPOT_SECTION
 7
 -1
EOF
";

fn with(from: &str, to: &str) -> String {
    assert!(SMALL.contains(from), "{from}");
    SMALL.replacen(from, to, 1)
}

#[test]
fn parses_arbitrary_ids_with_the_listed_depot() {
    let inst = parse_instance(SMALL).unwrap();
    assert_eq!(inst.name(), "tiny");
    assert_eq!(inst.n(), 3);
    assert_eq!(inst.capacity(), 10);
    // clients in ascending id order: 3, 5, 9
    assert_eq!(inst.demands().collect::<Vec<_>>(), vec![4, 6, 5]);
    assert_eq!(inst.distance(0, 1), 5.0);
    assert_eq!(inst.rounding(), Rounding::RoundedEuclidean);
}

#[test]
fn exact_weight_type_keeps_fractions() {
    let inst = parse_instance(&with("EUC_2D", "EXACT_2D")).unwrap();
    assert_eq!(inst.rounding(), Rounding::ExactEuclidean);
    assert!((inst.distance(2, 3) - 45f64.sqrt()).abs() < 1e-12);
}

proptest! {
    #[test]
    fn instance_round_trip(n in 1usize..60, max_demand in 1u32..200, seed: u64, exact: bool) {
        let mut inst = synthetic("rt", n, max_demand, 6, seed);
        if exact {
            inst = inst.with_rounding(Rounding::ExactEuclidean);
        }
        let back = parse_instance(&write_instance(&inst)).unwrap();
        prop_assert_eq!(back, inst);
    }
}

#[test]
fn each_problem_has_its_own_error() {
    type Case = (String, fn(&ParseError) -> bool);
    let cases: Vec<Case> = vec![
        (with("CAPACITY : 10\n", ""), |e| matches!(e, ParseError::MissingCapacity)),
        (with("CAPACITY : 10", "CAPACITY : ten"), |e| matches!(e, ParseError::BadCapacity { line: 6, .. })),
        (with("9 5", "9 11"), |e| matches!(e, ParseError::DemandExceedsCapacity { node: 9, demand: 11, .. })),
        (with("5 6", "5 0"), |e| matches!(e, ParseError::ZeroDemand { node: 5, .. })),
        (with(" 5 0 5", " 3 0 5"), |e| matches!(e, ParseError::DuplicateNode { node: 3, .. })),
        (with("EUC_2D", "GEO"), |e| matches!(e, ParseError::UnsupportedWeightType { .. })),
        (with("DEPOT_SECTION\n 7\n -1\n", ""), |e| matches!(e, ParseError::MissingSection("DEPOT_SECTION"))),
        (with("5 6", "5 6\n11 2"), |e| matches!(e, ParseError::MissingCoordinates { node: 11, .. })),
        (with("9 5\n", ""), |e| matches!(e, ParseError::MissingDemand { node: 9 })),
        (with(" 7\n -1", " 8\n -1"), |e| matches!(e, ParseError::UnknownDepot { node: 8, .. })),
        (with("DIMENSION : 4", "DIMENSION : 5"), |e| {
            matches!(e, ParseError::Dimension { declared: 5, found: 4, .. })
        }),
        (with(" 3 3 4", " 3 3 x"), |e| {
            matches!(e, ParseError::Malformed { section: "NODE_COORD_SECTION", .. })
        }),
    ];
    for (text, ok) in cases {
        let err = parse_instance(&text).unwrap_err();
        assert!(ok(&err), "unexpected {err:?}");
    }
}

#[test]
fn solution_text_round_trip() {
    let inst = synthetic("s", 20, 10, 5, 3);
    let sol = best_of_k(&inst, &Forced::none(), 2, 300, 1).unwrap();
    let text = write_solution_text(&sol);
    assert!(text.starts_with("Route #1: "));
    let back = parse_solution_text(&inst, &text).unwrap();
    assert_eq!(back.client_routes(), sol.client_routes());
    assert_eq!(back.cost, sol.cost);
    let lie = text.replace(&format!("Cost {}", sol.cost), "Cost 1");
    assert!(parse_solution_text(&inst, &lie).is_err());
}

#[test]
fn model_json_round_trip_is_bit_exact() {
    let net = Network::init(42);
    let meta = ModelMeta {
        train_config: Default::default(),
        history: None,
        note: "x".into(),
    };
    let doc = ModelDoc::new(&net, &Scaler::identity(), meta);
    let text = serde_json::to_string(&doc).unwrap();
    let back: ModelDoc = serde_json::from_str(&text).unwrap();
    let net2 = back.network().unwrap();
    let bits = |n: &Network| n.params().map(|p| p.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&net), bits(&net2));

    let mut broken = back.clone();
    broken.layers[1].bias.pop();
    assert!(broken.network().is_err());
}

#[test]
fn scenario_delta_comes_from_the_distribution() {
    let spec: ScenarioSpec =
        serde_json::from_str(r#"{"nc":20,"class":"M","seed":5,"distribution":"U5_10"}"#).unwrap();
    let scn = spec.resolve().unwrap();
    assert_eq!((scn.nc, scn.class, scn.delta_d, scn.seed), (20, IntervalClass::Medium, 2, 5));
    let explicit = ScenarioSpec {
        delta_d: Some(9),
        distribution: Some(DemandDistribution::Range1To100),
        ..spec.clone()
    };
    assert_eq!(explicit.resolve().unwrap().delta_d, 9);
    let none = ScenarioSpec { distribution: None, ..spec };
    assert!(none.resolve().is_err());
}
