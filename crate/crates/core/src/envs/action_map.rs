use super::EnvError;
use std::collections::BTreeMap;

/// Agent names and action dims, in the fixed (sorted by name) order used for
/// flat actions.
pub type AgentSpec = Vec<(String, usize)>;

/// Concatenates per-agent `N × dim` actions into one `N × Σdim` array.
pub fn flatten_action_map(map: &BTreeMap<String, Vec<f64>>, agents: &[(String, usize)], num_envs: usize) -> Result<Vec<f64>, EnvError> {
    if let Some(k) = map.keys().find(|k| !agents.iter().any(|(a, _)| a == *k)) {
        return Err(EnvError::UnknownAgent(k.clone()));
    }
    let total: usize = agents.iter().map(|(_, d)| d).sum();
    let mut out = vec![0.0; num_envs * total];
    let mut offset = 0;
    for (name, dim) in agents {
        let a = map.get(name).ok_or_else(|| EnvError::MissingAgent(name.clone()))?;
        if a.len() != num_envs * dim {
            return Err(EnvError::ActionShape { expected: num_envs * dim, got: a.len() });
        }
        for env in 0..num_envs {
            out[env * total + offset..env * total + offset + dim].copy_from_slice(&a[env * dim..(env + 1) * dim]);
        }
        offset += dim;
    }
    Ok(out)
}

/// Inverse of [`flatten_action_map`].
pub fn unflatten_actions(flat: &[f64], agents: &[(String, usize)], num_envs: usize) -> Result<BTreeMap<String, Vec<f64>>, EnvError> {
    let total: usize = agents.iter().map(|(_, d)| d).sum();
    if flat.len() != num_envs * total {
        return Err(EnvError::ActionShape { expected: num_envs * total, got: flat.len() });
    }
    let mut out = BTreeMap::new();
    let mut offset = 0;
    for (name, dim) in agents {
        let mut a = Vec::with_capacity(num_envs * dim);
        for env in 0..num_envs {
            a.extend_from_slice(&flat[env * total + offset..env * total + offset + dim]);
        }
        out.insert(name.clone(), a);
        offset += dim;
    }
    Ok(out)
}
