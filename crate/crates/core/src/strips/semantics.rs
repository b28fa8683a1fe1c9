use super::{DomainModel, GroundAction, Literal, Plan, ProblemSpec, State, StripsError};
use crate::cost::Cost;

pub fn applicable(state: &State, action: &GroundAction) -> bool {
    action.pre_pos.iter().all(|a| state.contains(a)) && action.pre_neg.iter().all(|a| !state.contains(a))
}

/// `(s \ del) ∪ add`, or an error naming the action when it is not applicable.
pub fn apply(state: &State, action: &GroundAction) -> Result<State, StripsError> {
    if !applicable(state, action) {
        return Err(StripsError::PreconditionViolation(action.to_string()));
    }
    let mut next = state.clone();
    for d in &action.dels {
        next.remove(d);
    }
    next.extend(action.adds.iter().cloned());
    Ok(next)
}

pub fn goal_satisfied(state: &State, goal: &[Literal]) -> bool {
    goal.iter().all(|lit| lit.holds_in(state))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PlanValidation {
    /// 1-based index of the first failing step, if any.
    pub failed_step: Option<usize>,
    pub diagnostic: Option<String>,
    pub final_state: State,
    pub cost: Cost,
}

impl PlanValidation {
    pub fn is_valid(&self) -> bool {
        self.diagnostic.is_none()
    }
}

/// Replays `plan` from the problem's initial state. Each step is
/// re-instantiated from `domain`, so a plan whose steps do not match the
/// advertised schemas is rejected as well.
pub fn validate_plan(domain: &DomainModel, problem: &ProblemSpec, plan: &Plan) -> PlanValidation {
    let mut state = problem.init.clone();
    let mut cost = Cost::ZERO;
    let fail = |step: usize, msg: String, state: State, cost: Cost| PlanValidation {
        failed_step: Some(step),
        diagnostic: Some(format!("step {step}: {msg}")),
        final_state: state,
        cost,
    };
    for (i, step) in plan.steps.iter().enumerate() {
        let n = i + 1;
        let Some(schema) = domain.schema(&step.name) else {
            return fail(n, format!("unknown action {}", step.name), state, cost);
        };
        let action = match schema.instantiate(&step.args) {
            Ok(a) => a,
            Err(e) => return fail(n, e.to_string(), state, cost),
        };
        for (arg, param) in action.args.iter().zip(&schema.params) {
            match problem.object_type(domain, arg) {
                Some(ty) if domain.is_subtype(ty, &param.ty) => {}
                Some(ty) => return fail(n, format!("{arg} is a {ty}, expected {}", param.ty), state, cost),
                None => return fail(n, format!("unknown object {arg}"), state, cost),
            }
        }
        if let Some(missing) = action.pre_pos.iter().find(|a| !state.contains(*a)) {
            return fail(n, format!("precondition {missing} of {action} does not hold"), state, cost);
        }
        if let Some(present) = action.pre_neg.iter().find(|a| state.contains(*a)) {
            return fail(n, format!("precondition (not {present}) of {action} does not hold"), state, cost);
        }
        state = apply(&state, &action).expect("checked above");
        cost = cost + action.cost;
    }
    if let Some(unmet) = problem.goal.iter().find(|l| !l.holds_in(&state)) {
        let step = plan.steps.len();
        return PlanValidation {
            failed_step: None,
            diagnostic: Some(format!("goal {unmet} not reached after {step} steps")),
            final_state: state,
            cost,
        };
    }
    PlanValidation { failed_step: None, diagnostic: None, final_state: state, cost }
}
