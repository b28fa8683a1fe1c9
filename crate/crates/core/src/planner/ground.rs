use crate::strips::{DomainModel, GroundAction, ProblemSpec};

use super::PlannerError;

/// Every type-respecting instantiation of every schema, ordered by schema
/// name and then lexicographically by arguments.
///
/// Fails with `ResourceLimit` once more than `limit` instances would be
/// produced.
pub fn ground(domain: &DomainModel, problem: &ProblemSpec, limit: usize) -> Result<Vec<GroundAction>, PlannerError> {
    let universe = problem.universe(domain);
    let mut schemas: Vec<_> = domain.schemas.iter().collect();
    schemas.sort_by_key(|s| s.qualified_name());

    let mut out = Vec::new();
    for schema in schemas {
        let candidates: Vec<Vec<&str>> = schema
            .params
            .iter()
            .map(|p| {
                universe
                    .iter()
                    .filter(|o| domain.is_subtype(&o.ty, &p.ty))
                    .map(|o| o.name.as_str())
                    .collect()
            })
            .collect();
        if candidates.iter().any(Vec::is_empty) {
            continue;
        }
        // odometer over the candidate lists, last parameter fastest
        let mut idx = vec![0usize; candidates.len()];
        'odometer: loop {
            if out.len() >= limit {
                return Err(PlannerError::ResourceLimit { what: "ground actions", limit });
            }
            let args: Vec<String> = idx.iter().zip(&candidates).map(|(&i, c)| c[i].to_string()).collect();
            out.push(schema.instantiate(&args)?);
            for k in (0..idx.len()).rev() {
                idx[k] += 1;
                if idx[k] < candidates[k].len() {
                    continue 'odometer;
                }
                idx[k] = 0;
            }
            break;
        }
    }
    Ok(out)
}
