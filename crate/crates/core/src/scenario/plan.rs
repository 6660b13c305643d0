use std::fmt;

use super::{Scenario, ScenarioError, Subsequence};

/// Bounds on the number of chained executions of one scenario.
pub const MIN_CHAIN: usize = 2;
pub const MAX_CHAIN: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepKind {
    /// Static equilibrium solve.
    Equilibrium,
    /// Short axisymmetric run (n = 0 only) with ramped time steps.
    AxisymmetricEstablish,
    /// Full evolution over one subsequence.
    Evolve,
}

impl StepKind {
    pub fn as_str(self) -> &'static str {
        match self {
            StepKind::Equilibrium => "equilibrium",
            StepKind::AxisymmetricEstablish => "axisymmetric_establish",
            StepKind::Evolve => "evolve",
        }
    }
}

impl fmt::Display for StepKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExecutionStep {
    /// 1-based position in the chain; output goes to `out_loop<index>`.
    pub index: usize,
    pub kind: StepKind,
    pub n_tor: u32,
    pub subsequence: Option<Subsequence>,
    /// Index of the step whose checkpoint this one restarts from.
    pub restart_from: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExecutionPlan {
    pub steps: Vec<ExecutionStep>,
}

impl ExecutionPlan {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn evolve_steps(&self) -> impl Iterator<Item = &ExecutionStep> {
        self.steps.iter().filter(|s| s.kind == StepKind::Evolve)
    }

    /// Time steps taken by the evolve executions.
    pub fn evolve_time_steps(&self) -> u64 {
        self.evolve_steps()
            .filter_map(|s| s.subsequence.as_ref())
            .map(Subsequence::total_steps)
            .sum()
    }

    /// Simulated time covered by the evolve executions.
    pub fn evolve_duration(&self) -> f64 {
        self.evolve_steps()
            .filter_map(|s| s.subsequence.as_ref())
            .map(Subsequence::duration)
            .sum()
    }
}

/// Doubling ramp from `tstep_min` up to (and ending exactly at) `target`.
fn establish_ramp(tstep_min: f64, steps_per_level: u64, target: f64) -> Subsequence {
    let mut tstep_n = Vec::new();
    let mut dt = tstep_min;
    while dt < target {
        tstep_n.push(dt);
        dt *= 2.0;
    }
    tstep_n.push(target);
    let nstep_n = vec![steps_per_level; tstep_n.len()];
    Subsequence { tstep_n, nstep_n }
}

/// Equilibrium, then axisymmetric establishment, then one evolve execution
/// per subsequence with the `n_tor` schedule applied.
pub fn plan_executions(scenario: &Scenario) -> Result<ExecutionPlan, ScenarioError> {
    let n_evolve = scenario.subsequences.len();
    let chain = n_evolve + 2;
    if !(MIN_CHAIN..=MAX_CHAIN).contains(&chain) {
        return Err(ScenarioError::ScheduleIndexOutOfRange {
            index: chain,
            max: MAX_CHAIN,
        });
    }
    scenario.validate()?;
    for &(index, _) in &scenario.n_tor_schedule {
        if index == 0 || index > n_evolve {
            return Err(ScenarioError::ScheduleIndexOutOfRange {
                index,
                max: n_evolve,
            });
        }
    }
    let base = scenario
        .base_n_tor()
        .map_err(ScenarioError::InvalidScenarioFile)?;

    let mut steps = vec![
        ExecutionStep {
            index: 1,
            kind: StepKind::Equilibrium,
            n_tor: 1,
            subsequence: None,
            restart_from: None,
        },
        ExecutionStep {
            index: 2,
            kind: StepKind::AxisymmetricEstablish,
            n_tor: 1,
            subsequence: Some(establish_ramp(
                scenario.establish.tstep_min,
                scenario.establish.steps_per_level,
                scenario.subsequences[0].tstep_n[0],
            )),
            restart_from: Some(1),
        },
    ];
    let mut n_tor = base;
    for (k, sub) in scenario.subsequences.iter().enumerate() {
        let evolve_index = k + 1;
        if let Some(&(_, n)) = scenario
            .n_tor_schedule
            .iter()
            .rev()
            .find(|&&(i, _)| i == evolve_index)
        {
            n_tor = n;
        }
        let index = steps.len() + 1;
        steps.push(ExecutionStep {
            index,
            kind: StepKind::Evolve,
            n_tor,
            subsequence: Some(sub.clone()),
            restart_from: Some(index - 1),
        });
    }
    Ok(ExecutionPlan { steps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::MetricSpec;
    use crate::timeseries::Quantity;
    use std::collections::BTreeMap;

    fn scenario(subs: Vec<Subsequence>, schedule: Vec<(usize, u32)>) -> Scenario {
        Scenario {
            model_id: 1,
            hardcoded_params: BTreeMap::from([("n_tor".to_string(), "3".to_string())]),
            input_params: BTreeMap::new(),
            subsequences: subs,
            n_tor_schedule: schedule,
            establish: Default::default(),
            metric_defaults: MetricSpec::new(0.0, 1.0, 0.01, vec![Quantity::Magnetic], vec![1])
                .unwrap(),
        }
    }

    fn sub(t: &[f64], n: &[u64]) -> Subsequence {
        Subsequence::new(t.to_vec(), n.to_vec()).unwrap()
    }

    #[test]
    fn single_subsequence_gives_three_steps() {
        let plan = plan_executions(&scenario(vec![sub(&[5.0, 10.0], &[3, 10])], vec![])).unwrap();
        assert_eq!(plan.len(), 3);
        let kinds: Vec<_> = plan.steps.iter().map(|s| s.kind).collect();
        assert_eq!(
            kinds,
            vec![StepKind::Equilibrium, StepKind::AxisymmetricEstablish, StepKind::Evolve]
        );
        assert_eq!(plan.evolve_time_steps(), 13);
        assert_eq!(plan.evolve_duration(), 115.0);
        assert_eq!(plan.steps[2].n_tor, 3);
        assert_eq!(plan.steps[2].restart_from, Some(2));
    }

    #[test]
    fn ramp_doubles_up_to_first_tstep() {
        let plan = plan_executions(&scenario(vec![sub(&[0.1], &[1])], vec![])).unwrap();
        let ramp = plan.steps[1].subsequence.as_ref().unwrap();
        assert_eq!(ramp.tstep_n, vec![0.01, 0.02, 0.04, 0.08, 0.1]);
        assert_eq!(ramp.nstep_n, vec![2; 5]);
        assert_eq!(plan.steps[1].n_tor, 1);
    }

    #[test]
    fn schedule_raises_n_tor() {
        let subs = vec![sub(&[1.0], &[2]), sub(&[1.0], &[2]), sub(&[1.0], &[2])];
        let plan = plan_executions(&scenario(subs, vec![(2, 5)])).unwrap();
        let n: Vec<_> = plan.evolve_steps().map(|s| s.n_tor).collect();
        assert_eq!(n, vec![3, 5, 5]);
    }

    #[test]
    fn chain_bounds() {
        let seven = vec![sub(&[1.0], &[1]); 7];
        assert_eq!(plan_executions(&scenario(seven, vec![])).unwrap().len(), MAX_CHAIN);
        let ten = vec![sub(&[1.0], &[1]); 10];
        assert!(matches!(
            plan_executions(&scenario(ten, vec![])),
            Err(ScenarioError::ScheduleIndexOutOfRange { index: 12, max: 9 })
        ));
        let eight = vec![sub(&[1.0], &[1]); 8];
        assert!(plan_executions(&scenario(eight, vec![])).is_err());
    }

    #[test]
    fn schedule_index_out_of_range() {
        let s = scenario(vec![sub(&[1.0], &[1])], vec![(2, 5)]);
        assert!(matches!(
            plan_executions(&s),
            Err(ScenarioError::ScheduleIndexOutOfRange { index: 2, max: 1 })
        ));
    }

    #[test]
    fn empty_scenario_is_rejected() {
        assert!(matches!(
            plan_executions(&scenario(vec![], vec![])),
            Err(ScenarioError::InvalidScenarioFile(_))
        ));
    }

    #[test]
    fn deterministic() {
        let s = scenario(vec![sub(&[1.0, 2.0], &[3, 4]), sub(&[4.0], &[1])], vec![(2, 7)]);
        assert_eq!(plan_executions(&s).unwrap(), plan_executions(&s).unwrap());
    }
}
