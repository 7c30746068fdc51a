//! Writes the oracle stream set as JSON (`[{"name", "hex"}]`) for the
//! reference-side script.

use std::io::Write;

fn main() {
    let streams = modelsentry::forge::oracle::oracle_streams().expect("corpus builds");
    let list: Vec<_> = streams
        .iter()
        .map(|(name, bytes)| serde_json::json!({"name": name, "hex": hex::encode(bytes)}))
        .collect();
    let text = serde_json::to_string_pretty(&list).expect("serializes");
    match std::env::args().nth(1) {
        Some(path) => std::fs::write(path, text).expect("write output"),
        None => std::io::stdout().write_all(text.as_bytes()).expect("write stdout"),
    }
}
