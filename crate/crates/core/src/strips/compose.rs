use std::collections::BTreeMap;

use super::pddl::print_domain;
use super::{DomainModel, PredicateDecl, StripsError, TypedName};

/// Union of domain fragments.
///
/// Types, constants and predicates merge by name and must agree; schemas are
/// concatenated and sorted by `(owner, name)`. The result does not depend on
/// the order of `fragments`.
pub fn compose_domain(fragments: &[DomainModel]) -> Result<DomainModel, StripsError> {
    let mut ordered: Vec<(String, &DomainModel)> = fragments.iter().map(|f| (print_domain(f), f)).collect();
    ordered.sort_by(|a, b| a.1.name.cmp(&b.1.name).then_with(|| a.0.cmp(&b.0)));

    let mut out = DomainModel::new("composite");
    let mut constants: BTreeMap<String, TypedName> = BTreeMap::new();
    let mut predicates: BTreeMap<String, (PredicateDecl, &str)> = BTreeMap::new();
    let mut schemas = Vec::new();

    for (_, fragment) in &ordered {
        for (ty, parent) in &fragment.types {
            match out.types.get(ty) {
                Some(existing) if existing != parent => {
                    return Err(StripsError::CompositionConflict(format!(
                        "type {ty} has parent {} in {} but {} elsewhere",
                        parent.as_deref().unwrap_or("object"),
                        fragment.name,
                        existing.as_deref().unwrap_or("object"),
                    )));
                }
                Some(_) => {}
                None => {
                    out.types.insert(ty.clone(), parent.clone());
                }
            }
        }
        for c in &fragment.constants {
            match constants.get(&c.name) {
                Some(existing) if existing.ty != c.ty => {
                    return Err(StripsError::CompositionConflict(format!(
                        "constant {} is a {} in {} but a {} elsewhere",
                        c.name, c.ty, fragment.name, existing.ty
                    )));
                }
                Some(_) => {}
                None => {
                    constants.insert(c.name.clone(), c.clone());
                }
            }
        }
        for p in &fragment.predicates {
            match predicates.get(&p.name) {
                Some((existing, origin)) if existing.arity_types() != p.arity_types() => {
                    return Err(StripsError::CompositionConflict(format!(
                        "predicate {} is ({}) in {} but ({}) in {origin}",
                        p.name,
                        p.arity_types().join(" "),
                        fragment.name,
                        existing.arity_types().join(" "),
                    )));
                }
                Some(_) => {}
                None => {
                    predicates.insert(p.name.clone(), (p.clone(), fragment.name.as_str()));
                }
            }
        }
        schemas.extend(fragment.schemas.iter().cloned());
    }

    schemas.sort_by(|a, b| a.owner.cmp(&b.owner).then_with(|| a.name.cmp(&b.name)));
    for pair in schemas.windows(2) {
        if pair[0].owner == pair[1].owner && pair[0].name == pair[1].name {
            return Err(StripsError::CompositionConflict(format!(
                "schema {} advertised twice",
                pair[0].qualified_name()
            )));
        }
    }
    out.constants = constants.into_values().collect();
    out.predicates = predicates.into_values().map(|(p, _)| p).collect();
    out.schemas = schemas;
    out.validate().map_err(|e| StripsError::CompositionConflict(e.to_string()))?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::strips::{ActionSchema, AtomSchema, Term};

    fn fragment(owner: &str, loc_ty: &str) -> DomainModel {
        DomainModel::new(owner)
            .with_type("location", None)
            .with_type("agent", None)
            .with_constant(owner, "agent")
            .with_predicate("at", &[("a", "agent"), ("l", loc_ty)])
            .with_schema(
                ActionSchema::new("stay")
                    .owned_by(owner)
                    .param("l", "location")
                    .pre(AtomSchema::new("at", vec![Term::Const(owner.into()), Term::Var("l".into())]), true),
            )
    }

    #[test]
    fn union_is_sorted_and_order_free() {
        let a = fragment("b-bot", "location");
        let b = fragment("a-bot", "location");
        let ab = compose_domain(&[a.clone(), b.clone()]).unwrap();
        let ba = compose_domain(&[b, a]).unwrap();
        assert_eq!(ab, ba);
        let names: Vec<String> = ab.schemas.iter().map(|s| s.qualified_name()).collect();
        assert_eq!(names, vec!["a-bot.stay", "b-bot.stay"]);
        assert_eq!(ab.predicates.len(), 1);
    }

    #[test]
    fn predicate_signature_mismatch_conflicts() {
        let a = fragment("x", "location");
        let b = fragment("y", "agent");
        assert!(matches!(compose_domain(&[a, b]), Err(StripsError::CompositionConflict(_))));
    }

    #[test]
    fn duplicate_schema_conflicts() {
        let a = fragment("x", "location");
        assert!(matches!(compose_domain(&[a.clone(), a]), Err(StripsError::CompositionConflict(_))));
    }
}
