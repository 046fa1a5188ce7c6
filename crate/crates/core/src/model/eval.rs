use std::collections::HashMap;

use indexmap::IndexMap;

use super::{ModelError, Result, SyncGraph};
use crate::bits::Bits;

/// Reference software evaluation: runs every step body in recording order
/// on one set of input values and returns the value of each output port.
///
/// Inputs missing from `inputs` read as zero; values are resized to the
/// declared width.
pub fn evaluate(graph: &SyncGraph, inputs: &HashMap<String, Bits>) -> Result<IndexMap<String, Bits>> {
    let mut env: HashMap<&str, Bits> = HashMap::new();
    for (name, decl) in &graph.signals {
        if decl.declaring_zone == graph.input_zone {
            let v = inputs.get(name).cloned().unwrap_or_else(|| Bits::zero(decl.width));
            env.insert(name, v.resize(decl.width));
        }
    }
    for step in &graph.steps {
        for d in &step.body.defines {
            let v = d.expr.eval(&|n| env.get(n).cloned()).map_err(|e| ModelError::ExprWidth {
                signal: d.name.clone(),
                message: e.to_string(),
            })?;
            env.insert(&d.name, v.resize(d.width));
        }
    }
    Ok(graph.outputs.iter().map(|o| (o.name.clone(), env[o.signal.as_str()].clone())).collect())
}
