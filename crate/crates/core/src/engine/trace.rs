use std::io::Write;

use crate::error::{Error, Result};
use crate::model::Instance;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Step {
    pub request: usize,
    pub server: Option<usize>,
    pub success: bool,
    /// Load of the chosen server before this assignment; 0 when unassigned.
    pub load_before: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ServerOutcome {
    pub load: f64,
    pub successes: u32,
}

/// Per-run log of decisions and sampled outcomes.
#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    pub steps: Vec<Step>,
    pub servers: Vec<ServerOutcome>,
    pub matched_weight: f64,
}

impl Trace {
    /// Recomputes final server states and matched weight from the steps.
    pub fn replay(&self, inst: &Instance) -> Result<(Vec<ServerOutcome>, f64)> {
        let mut out: Vec<ServerOutcome> = inst
            .servers()
            .iter()
            .map(|_| ServerOutcome {
                load: 0.0,
                successes: 0,
            })
            .collect();
        let mut weight = 0.0;
        for step in &self.steps {
            let Some(s) = step.server else { continue };
            let request = &inst.requests()[step.request];
            let edge = request.edge_to(s).ok_or_else(|| Error::ContractViolation {
                request: step.request,
                message: format!("trace assigns to non-adjacent server {s}"),
            })?;
            let server = &inst.servers()[s];
            if out[s].successes >= server.capacity {
                return Err(Error::ContractViolation {
                    request: step.request,
                    message: format!("trace assigns to full server {s}"),
                });
            }
            if out[s].load != step.load_before {
                return Err(Error::ContractViolation {
                    request: step.request,
                    message: format!(
                        "recorded load {} differs from replayed {}",
                        step.load_before, out[s].load
                    ),
                });
            }
            out[s].load += edge.probability;
            if step.success {
                out[s].successes += 1;
                weight += server.weight;
            }
        }
        Ok((out, weight))
    }

    /// Replays the trace and checks it reproduces the recorded final states.
    pub fn verify(&self, inst: &Instance) -> Result<()> {
        let (servers, weight) = self.replay(inst)?;
        if servers != self.servers || weight != self.matched_weight {
            return Err(Error::ContractViolation {
                request: inst.n_requests(),
                message: "replayed final state differs from trace".into(),
            });
        }
        Ok(())
    }

    /// One CSV record per request: `request_id,server_id,success,load_before`,
    /// with server `-1` for unassigned requests.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["request_id", "server_id", "success", "load_before"])?;
        for s in &self.steps {
            let server = s.server.map_or(-1, |v| v as i64);
            out.write_record(&[
                s.request.to_string(),
                server.to_string(),
                (s.success as u8).to_string(),
                s.load_before.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use crate::engine::{run_online, OutcomeOracle};
    use crate::model::gen_gnb;
    use crate::policies::StochasticBalance;

    #[test]
    fn csv_export_and_tamper_detection() {
        let inst = gen_gnb(2, 1, 0.5).unwrap();
        let mut t =
            run_online(&inst, &StochasticBalance, &mut OutcomeOracle::always(false)).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[1], "0,0,0,0");
        assert_eq!(lines[2], "1,1,0,0");
        assert_eq!(lines[3], "2,1,0,0.5");

        t.steps[3].success = true;
        assert!(t.verify(&inst).is_err());
    }
}
