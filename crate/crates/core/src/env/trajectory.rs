//! Line-delimited trajectory dump for debugging.
//!
//! One record per agent per step, tab separated:
//!
//! ```text
//! <t>\t<agent>\t<action>\t<reward>\t<obs_0>,<obs_1>,...
//! ```
//!
//! `t` counts steps within the episode starting at 0 for the observation the
//! action was chosen from. Floats use the shortest round-trip representation.
//! A line starting with `#` is a comment (the writer emits a header line).

use std::io::Write;

use crate::error::Result;

pub struct TrajectoryWriter<W: Write> {
    out: W,
}

impl<W: Write> TrajectoryWriter<W> {
    pub fn new(mut out: W) -> Result<Self> {
        writeln!(out, "# t\tagent\taction\treward\tobs")?;
        Ok(Self { out })
    }

    pub fn record(&mut self, t: usize, agent: usize, obs: &[f64], action: usize, reward: f64) -> Result<()> {
        let obs = obs.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",");
        writeln!(self.out, "{t}\t{agent}\t{action}\t{reward}\t{obs}")?;
        Ok(())
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn record_format() {
        let mut w = TrajectoryWriter::new(Vec::new()).unwrap();
        w.record(3, 1, &[0.5, -1.0], 4, -0.25).unwrap();
        let text = String::from_utf8(w.into_inner()).unwrap();
        assert_eq!(text, "# t\tagent\taction\treward\tobs\n3\t1\t4\t-0.25\t0.5,-1\n");
    }
}
