use std::process::Command;

use log::debug;

use crate::strips::pddl::{print_domain, print_problem};
use crate::strips::{DomainModel, Plan, ProblemSpec};

use super::PlannerError;

/// Runs an outside planner binary.
///
/// `domain.pddl` and `problem.pddl` are written to a fresh temporary
/// directory. Arguments `{domain}` and `{problem}` are replaced by their
/// paths; when neither appears both paths are appended. Stdout lines of the
/// form `(owner.name arg ...)` form the plan, anything else is ignored.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExternalPlanner {
    pub program: String,
    pub args: Vec<String>,
}

impl ExternalPlanner {
    pub fn new(program: impl Into<String>, args: impl IntoIterator<Item = impl Into<String>>) -> Self {
        ExternalPlanner { program: program.into(), args: args.into_iter().map(Into::into).collect() }
    }

    pub fn solve(&self, domain: &DomainModel, problem: &ProblemSpec) -> Result<Plan, PlannerError> {
        let dir = tempfile::tempdir().map_err(|e| PlannerError::Backend(e.to_string()))?;
        let domain_path = dir.path().join("domain.pddl");
        let problem_path = dir.path().join("problem.pddl");
        std::fs::write(&domain_path, print_domain(domain)).map_err(|e| PlannerError::Backend(e.to_string()))?;
        std::fs::write(&problem_path, print_problem(problem)).map_err(|e| PlannerError::Backend(e.to_string()))?;

        let domain_arg = domain_path.to_string_lossy().into_owned();
        let problem_arg = problem_path.to_string_lossy().into_owned();
        let mut substituted = false;
        let mut args: Vec<String> = self
            .args
            .iter()
            .map(|a| {
                if a.contains("{domain}") || a.contains("{problem}") {
                    substituted = true;
                }
                a.replace("{domain}", &domain_arg).replace("{problem}", &problem_arg)
            })
            .collect();
        if !substituted {
            args.push(domain_arg);
            args.push(problem_arg);
        }
        debug!("running external planner {} {:?}", self.program, args);
        let output = Command::new(&self.program)
            .args(&args)
            .current_dir(dir.path())
            .output()
            .map_err(|e| PlannerError::Backend(format!("{}: {e}", self.program)))?;
        if !output.status.success() {
            let stderr = String::from_utf8_lossy(&output.stderr);
            return Err(PlannerError::Backend(format!("{} exited with {}: {}", self.program, output.status, stderr.trim())));
        }
        parse_plan_text(domain, &String::from_utf8_lossy(&output.stdout))
    }
}

/// Reads plan lines such as `(tb1.move corridor office1)`.
pub fn parse_plan_text(domain: &DomainModel, text: &str) -> Result<Plan, PlannerError> {
    let mut steps = Vec::new();
    for line in text.lines().map(str::trim) {
        let Some(inner) = line.strip_prefix('(').and_then(|l| l.strip_suffix(')')) else {
            continue;
        };
        let mut words = inner.split_whitespace().map(str::to_lowercase);
        let Some(name) = words.next() else { continue };
        let args: Vec<String> = words.collect();
        let schema = domain
            .schema(&name)
            .ok_or_else(|| PlannerError::Backend(format!("plan mentions unknown action {name}")))?;
        steps.push(schema.instantiate(&args).map_err(|e| PlannerError::Backend(e.to_string()))?);
    }
    Ok(Plan::new(steps))
}
