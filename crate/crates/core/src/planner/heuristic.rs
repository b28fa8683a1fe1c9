use crate::cost::Cost;
use crate::strips::{GroundAction, Literal, State};

use super::Task;

/// Additive delete-relaxation estimate of reaching `goal` from `state`;
/// `None` stands for infinity. Negative literals are ignored by the
/// relaxation.
pub fn h_add(state: &State, goal: &[Literal], actions: &[GroundAction]) -> Option<Cost> {
    let task = Task::build(actions.to_vec(), state, goal);
    relaxed_cost(&task, &task.init)
}

pub(crate) fn relaxed_cost(task: &Task, state: &fixedbitset::FixedBitSet) -> Option<Cost> {
    let n = state.len();
    let mut cost: Vec<Option<Cost>> = (0..n).map(|i| state.contains(i).then_some(Cost::ZERO)).collect();
    // Bellman-Ford style fixpoint; costs only decrease
    let mut changed = true;
    while changed {
        changed = false;
        for op in &task.ops {
            let mut total = op.cost;
            let mut reachable = true;
            for &p in &op.pre_pos {
                match cost[p] {
                    Some(c) => total = total + c,
                    None => {
                        reachable = false;
                        break;
                    }
                }
            }
            if !reachable {
                continue;
            }
            for &a in &op.add {
                if cost[a].is_none_or(|old| total < old) {
                    cost[a] = Some(total);
                    changed = true;
                }
            }
        }
    }
    task.goal_pos.iter().try_fold(Cost::ZERO, |acc, &g| cost[g].map(|c| acc + c))
}
