//! Simulated datasets and the CSV / JSON file formats.

use elasticfda::datasets::{csv_string, from_json_str, read_csv, to_json_string, Recipe};

fn main() -> elasticfda::Result<()> {
    for r in Recipe::ALL {
        println!("{r}: {} functions by default", r.default_n());
    }
    let s = elasticfda::datasets::gen_unimodal_fig3(5, 3)?;
    let data = s.observed_data();
    let text = csv_string(&data, data.grid()?.len())?;
    for line in text.lines().take(4) {
        println!("{line}");
    }
    let back = read_csv(text.as_bytes())?;
    println!("read back {} functions on {:?}", back.functions.len(), back.domain);
    let json = to_json_string(&back, false)?;
    println!("json roundtrip keeps {} functions", from_json_str(&json)?.functions.len());
    Ok(())
}
