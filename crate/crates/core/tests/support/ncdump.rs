//! JSON rendering of a parsed dataset in the shape written by
//! `fixtures/netcdf/generate.py`.

use rdcat_core::convert::{FormatVersion, SelfDescribingDataset, Values};
use serde_json::{json, Value};

fn values_json(values: &Values) -> (&'static str, Value) {
    match values {
        Values::Byte(v) => ("byte", json!(v)),
        Values::Char(v) => ("char", json!(v.iter().map(|&b| b as char).collect::<String>())),
        Values::Short(v) => ("short", json!(v)),
        Values::Int(v) => ("int", json!(v)),
        Values::Float(v) => ("float", json!(v.iter().map(|&x| x as f64).collect::<Vec<_>>())),
        Values::Double(v) => ("double", json!(v)),
    }
}

fn attr_json(name: &str, value: &Values) -> Value {
    let (kind, values) = values_json(value);
    json!({ "name": name, "type": kind, "values": values })
}

pub fn dump(ds: &SelfDescribingDataset) -> Value {
    let version = match ds.version {
        FormatVersion::Classic => 1,
        FormatVersion::Offset64 => 2,
    };
    let dims: Vec<Value> = ds
        .dimensions
        .iter()
        .map(|d| json!({ "name": d.name, "length": d.length, "is_record": d.is_record }))
        .collect();
    let globals: Vec<Value> = ds.global_attributes.iter().map(|a| attr_json(&a.name, &a.value)).collect();
    let vars: Vec<Value> = ds
        .variables
        .iter()
        .map(|v| {
            let (kind, values) = values_json(&v.data);
            json!({
                "name": v.name,
                "dimensions": ds.dimension_names(v),
                "type": kind,
                "attributes": v.attributes.iter().map(|a| attr_json(&a.name, &a.value)).collect::<Vec<_>>(),
                "values": values,
            })
        })
        .collect();
    json!({ "version": version, "dimensions": dims, "global_attributes": globals, "variables": vars })
}
