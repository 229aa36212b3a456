use std::collections::BTreeMap;
use std::io::Write;

use proptest::prelude::*;

use bcv::data::{load_csv, read_csv, ColumnKind, Feature, Task};
use bcv::rng::Pcg32;

fn sonar_shaped() -> String {
    let mut rng = Pcg32::from_seed(208);
    let mut s = (1..=60).map(|j| format!("V{j}")).collect::<Vec<_>>().join(",");
    s.push_str(",Class\n");
    for i in 0..208 {
        for _ in 0..60 {
            s.push_str(&format!("{:.4},", rng.uniform()));
        }
        s.push_str(if i % 2 == 0 { "R\n" } else { "M\n" });
    }
    s
}

#[test]
fn sonar_shaped_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sonar.csv");
    std::fs::File::create(&path).unwrap().write_all(sonar_shaped().as_bytes()).unwrap();
    let loaded = load_csv(&path, "Class", Task::Classification, &BTreeMap::new()).unwrap();
    assert_eq!(loaded.dataset.n_rows(), 208);
    assert_eq!(loaded.dataset.n_features(), 60);
    assert_eq!(loaded.dataset.target.n_classes(), 2);
    assert_eq!(loaded.dropped_rows, 0);
    assert!(loaded.dataset.schema().iter().all(|k| *k == ColumnKind::Numeric));
}

#[test]
fn loading_twice_is_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sonar.csv");
    std::fs::write(&path, sonar_shaped()).unwrap();
    let a = load_csv(&path, "Class", Task::Classification, &BTreeMap::new()).unwrap().dataset;
    let b = load_csv(&path, "Class", Task::Classification, &BTreeMap::new()).unwrap().dataset;
    for (fa, fb) in a.features.iter().zip(&b.features) {
        match (fa, fb) {
            (Feature::Numeric(x), Feature::Numeric(y)) => {
                assert!(x.iter().zip(y).all(|(p, q)| p.to_bits() == q.to_bits()))
            }
            _ => panic!("numeric columns expected"),
        }
    }
    assert_eq!(a, b);
}

#[test]
fn bundled_breast_cancer_sample() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/breast_cancer_500.csv");
    let loaded = load_csv(path, "diagnosis", Task::Classification, &BTreeMap::new()).unwrap();
    assert_eq!(loaded.dataset.n_rows(), 500);
    assert_eq!(loaded.dataset.n_features(), 30);
}

fn cell() -> impl Strategy<Value = String> {
    prop_oneof![
        (-1000i32..1000).prop_map(|v| v.to_string()),
        (-100.0f64..100.0).prop_map(|v| format!("{v}")),
        "[a-c]{1,2}",
        Just("NA".to_string()),
        Just(String::new()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn type_inference_ignores_row_order(
        rows in prop::collection::vec((cell(), cell(), cell(), prop::bool::ANY), 3..25),
        shuffle_seed in any::<u64>(),
    ) {
        let render = |rows: &[(String, String, String, bool)]| {
            let mut s = String::from("a,b,c,y\n");
            for (a, b, c, y) in rows {
                s.push_str(&format!("{a},{b},{c},{}\n", if *y { "p" } else { "q" }));
            }
            s
        };
        let mut shuffled = rows.clone();
        Pcg32::from_seed(shuffle_seed).shuffle(&mut shuffled);
        let one = read_csv(render(&rows).as_bytes(), "t", "y", Task::Classification, &BTreeMap::new());
        let two = read_csv(render(&shuffled).as_bytes(), "t", "y", Task::Classification, &BTreeMap::new());
        match (one, two) {
            (Ok(a), Ok(b)) => {
                prop_assert_eq!(a.dataset.schema(), b.dataset.schema());
                prop_assert_eq!(a.dropped_rows, b.dropped_rows);
                prop_assert_eq!(a.dataset.n_rows(), b.dataset.n_rows());
            }
            (Err(_), Err(_)) => {}
            (a, b) => prop_assert!(false, "one order loads, the other does not: {:?} / {:?}", a.is_ok(), b.is_ok()),
        }
    }
}
