use std::io::Cursor;

use modelsentry::container::{extract_h5_model_config, list_entries, HDF5_SIGNATURE};
use modelsentry::forge::{dumps, PickleValue};
use modelsentry::keras::walk_layers;
use modelsentry::pickle::{
    disassemble, disassemble_concatenated, disassemble_prefix, evaluate, evaluate_lenient, EventKind, ParseLimits,
    VmLimits,
};
use modelsentry::policy::{pickle_findings, FileContext};
use modelsentry::scan::scan_reader;
use modelsentry::{Policy, ScanOptions};
use proptest::prelude::*;
use serde_json::Value;

fn scalar() -> impl Strategy<Value = PickleValue> {
    prop_oneof![
        Just(PickleValue::None),
        any::<bool>().prop_map(PickleValue::Bool),
        any::<i64>().prop_map(PickleValue::Int),
        any::<f64>().prop_map(PickleValue::Float),
        "\\PC{0,12}".prop_map(PickleValue::Text),
        prop::collection::vec(any::<u8>(), 0..16).prop_map(PickleValue::Bytes),
    ]
}

fn value() -> impl Strategy<Value = PickleValue> {
    scalar().prop_recursive(4, 48, 6, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 0..6).prop_map(PickleValue::List),
            prop::collection::vec(inner.clone(), 0..6).prop_map(PickleValue::Tuple),
            prop::collection::vec(("[a-z]{1,6}".prop_map(PickleValue::Text), inner), 0..5).prop_map(PickleValue::Dict),
        ]
    })
}

fn json() -> impl Strategy<Value = Value> {
    let leaf = prop_oneof![
        Just(Value::Null),
        any::<bool>().prop_map(Value::Bool),
        any::<i32>().prop_map(Value::from),
        prop_oneof![Just("Lambda".to_string()), Just("layers".to_string()), "[a-z_]{0,8}".prop_map(|s| s)]
            .prop_map(Value::String),
    ];
    leaf.prop_recursive(6, 64, 5, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 0..5).prop_map(Value::Array),
            prop::collection::vec(
                (prop_oneof![Just("class_name"), Just("config"), Just("layers"), Just("function"), Just("layer")], inner),
                0..5
            )
            .prop_map(|kv| Value::Object(kv.into_iter().map(|(k, v)| (k.to_string(), v)).collect())),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn arbitrary_bytes_never_panic(bytes in prop::collection::vec(any::<u8>(), 0..512)) {
        let limits = ParseLimits::default();
        let (program, _) = disassemble_prefix(&bytes, &limits);
        let _ = evaluate_lenient(&program, &VmLimits::default());
        let _ = disassemble_concatenated(&bytes, &limits);
        let _ = scan_reader(&mut Cursor::new(&bytes), "fuzz", &Policy::default_policy(), &ScanOptions::default());
    }

    #[test]
    fn benign_values_round_trip_clean(v in value(), proto in 0u8..=5) {
        let bytes = dumps(&v, proto).unwrap();
        let program = disassemble(&bytes, &ParseLimits::default()).unwrap();
        prop_assert_eq!(program.trailing_bytes, 0);
        let result = evaluate(&program, &VmLimits::default()).unwrap();
        prop_assert!(result.root.is_some());
        let residual = result.events.iter().any(|e| matches!(e.kind, EventKind::ResidualStack { .. }));
        prop_assert!(!residual);
        let findings = pickle_findings(&result, &Policy::default_policy(), &FileContext::file("v.pkl"));
        prop_assert!(findings.is_empty(), "{:?}", findings);
    }

    #[test]
    fn prefixes_decode_consistently(v in value(), proto in 0u8..=5, cut in any::<prop::sample::Index>()) {
        let bytes = dumps(&v, proto).unwrap();
        let full = disassemble(&bytes, &ParseLimits::default()).unwrap();
        let n = cut.index(bytes.len());
        let (partial, err) = disassemble_prefix(&bytes[..n], &ParseLimits::default());
        prop_assert!(err.is_some());
        prop_assert!(partial.instructions.len() <= full.instructions.len());
        for (a, b) in partial.instructions.iter().zip(&full.instructions) {
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn container_parsers_total(tail in prop::collection::vec(any::<u8>(), 0..1024)) {
        let mut h5 = HDF5_SIGNATURE.to_vec();
        h5.extend_from_slice(&tail);
        let _ = extract_h5_model_config(&mut Cursor::new(&h5));
        let mut zip = b"PK\x03\x04".to_vec();
        zip.extend_from_slice(&tail);
        zip.extend_from_slice(b"PK\x05\x06");
        let _ = list_entries(&mut Cursor::new(&zip));
    }

    #[test]
    fn layer_walk_total(config in json()) {
        let walk = walk_layers(&config, &["Odd".to_string()]);
        for layer in &walk.layers {
            prop_assert!(layer.json_path.starts_with("config") || layer.json_path.is_empty());
        }
    }
}
