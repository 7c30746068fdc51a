//! Inputs shared by the scan benchmarks.

use modelsentry::forge::{dumps, PickleValue};

/// A state-dict shaped pickle with `tensors` entries of `width` bytes each.
pub fn state_dict_pickle(tensors: usize, width: usize, proto: u8) -> Vec<u8> {
    let entries = (0..tensors)
        .map(|i| {
            let meta = PickleValue::Tuple(vec![
                PickleValue::Text("float32".into()),
                PickleValue::List(vec![PickleValue::Int(i as i64), PickleValue::Int(width as i64)]),
            ]);
            let key = PickleValue::Text(format!("layers.{i}.weight"));
            (key, PickleValue::Tuple(vec![meta, PickleValue::Bytes(vec![(i % 251) as u8; width])]))
        })
        .collect();
    dumps(&PickleValue::Dict(entries), proto).expect("benign values always pickle")
}
