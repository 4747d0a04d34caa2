use crate::error::{Error, Result};

/// Decomposition of `[0, T]` into intervals `I_n = (t_{n-1}, t_n]`, each
/// carrying the index of its spatial mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct TimePartition {
    steps: Vec<f64>,
    mesh_index: Vec<usize>,
}

impl TimePartition {
    /// `m` equal steps on `[0, final_time]`, all on mesh 0.
    pub fn uniform(final_time: f64, m: usize) -> Result<TimePartition> {
        if !(final_time > 0.0) || m == 0 {
            return Err(Error::Config(format!(
                "invalid time partition: T = {final_time}, M = {m}"
            )));
        }
        Ok(TimePartition {
            steps: vec![final_time / m as f64; m],
            mesh_index: vec![0; m],
        })
    }

    pub fn new(steps: Vec<f64>, mesh_index: Vec<usize>) -> Result<TimePartition> {
        if steps.is_empty() || steps.len() != mesh_index.len() || steps.iter().any(|&k| !(k > 0.0)) {
            return Err(Error::Config("time steps must be positive, one mesh per interval".into()));
        }
        Ok(TimePartition { steps, mesh_index })
    }

    /// Number of intervals `M`.
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn final_time(&self) -> f64 {
        self.steps.iter().sum()
    }

    /// Length `k_n` of interval `n` (0-based).
    pub fn step(&self, n: usize) -> f64 {
        self.steps[n]
    }

    pub fn steps(&self) -> &[f64] {
        &self.steps
    }

    /// Start and end time of interval `n` (0-based).
    pub fn interval(&self, n: usize) -> (f64, f64) {
        let t0: f64 = self.steps[..n].iter().sum();
        (t0, t0 + self.steps[n])
    }

    /// Time nodes `t_0, ..., t_M`.
    pub fn nodes(&self) -> Vec<f64> {
        let mut t = Vec::with_capacity(self.steps.len() + 1);
        let mut acc = 0.0;
        t.push(acc);
        for k in &self.steps {
            acc += k;
            t.push(acc);
        }
        t
    }

    pub fn mesh_index(&self, n: usize) -> usize {
        self.mesh_index[n]
    }

    pub fn mesh_indices(&self) -> &[usize] {
        &self.mesh_index
    }

    /// Bisects the marked intervals; both halves keep the mesh of their
    /// parent. Returns the new partition and, per new interval, its parent.
    pub fn bisect(&self, marked: &[bool]) -> (TimePartition, Vec<usize>) {
        let mut steps = Vec::new();
        let mut meshes = Vec::new();
        let mut parent = Vec::new();
        for n in 0..self.len() {
            if marked.get(n).copied().unwrap_or(false) {
                for _ in 0..2 {
                    steps.push(0.5 * self.steps[n]);
                    meshes.push(self.mesh_index[n]);
                    parent.push(n);
                }
            } else {
                steps.push(self.steps[n]);
                meshes.push(self.mesh_index[n]);
                parent.push(n);
            }
        }
        (TimePartition { steps, mesh_index: meshes }, parent)
    }

    /// Same steps with a new mesh assignment.
    pub fn with_meshes(&self, mesh_index: Vec<usize>) -> TimePartition {
        assert_eq!(mesh_index.len(), self.steps.len());
        TimePartition {
            steps: self.steps.clone(),
            mesh_index,
        }
    }

    /// Halves every step.
    pub fn refine_global(&self) -> TimePartition {
        self.bisect(&vec![true; self.len()]).0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn channel_default_partition() {
        let p = TimePartition::uniform(60.0, 256).unwrap();
        assert_eq!(p.step(0), 0.234375);
        assert!((p.final_time() - 60.0).abs() < 1e-12);
        assert_eq!(p.nodes().len(), 257);
    }

    #[test]
    fn bisection_keeps_final_time() {
        let p = TimePartition::uniform(1.0, 4).unwrap();
        let (q, parent) = p.bisect(&[true, false, false, true]);
        assert_eq!(q.len(), 6);
        assert_eq!(parent, vec![0, 0, 1, 2, 3, 3]);
        assert!((q.final_time() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_steps() {
        assert!(TimePartition::new(vec![0.5, 0.0], vec![0, 0]).is_err());
        assert!(TimePartition::uniform(0.0, 3).is_err());
    }
}
