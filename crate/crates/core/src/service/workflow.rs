//! Experiment phases and the command guard. Pure: [`Workflow::next`] only
//! decides whether a command is allowed and what the phase becomes.

use serde::{Deserialize, Serialize};

use super::protocol::Command;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Uncalibrated,
    Calibrated,
    VoiceCheck,
    Testing,
    Recorded,
    Saved,
}

/// Completions reported by the engine rather than requested by a client.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Completion {
    TestFinished,
    TestFailed,
    PlaybackFinished,
    CalibrationFinished,
    VoiceCheckFinished,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Workflow {
    pub phase: Phase,
    pub calibrated: bool,
    pub calibrating: bool,
    pub playing: bool,
    /// Phase to return to when the voice check ends.
    resume: Phase,
}

impl Default for Workflow {
    fn default() -> Self {
        Workflow {
            phase: Phase::Uncalibrated,
            calibrated: false,
            calibrating: false,
            playing: false,
            resume: Phase::Uncalibrated,
        }
    }
}

fn refuse(msg: &str) -> Error {
    Error::InvalidState(msg.to_string())
}

impl Workflow {
    /// A state restored after a restart with an existing calibration.
    pub fn with_calibration(calibrated: bool) -> Self {
        let mut w = Workflow::default();
        if calibrated {
            w.calibrated = true;
            w.phase = Phase::Calibrated;
        }
        w
    }

    /// Some loop owns the audio device.
    pub fn busy(&self) -> bool {
        self.calibrating || self.playing || matches!(self.phase, Phase::VoiceCheck | Phase::Testing)
    }

    pub fn can_save(&self) -> bool {
        self.phase == Phase::Recorded && !self.busy()
    }

    pub fn can_play(&self) -> bool {
        matches!(self.phase, Phase::Recorded | Phase::Saved) && !self.busy()
    }

    fn idle(&self) -> Result<()> {
        if self.busy() {
            Err(refuse("another loop is running"))
        } else {
            Ok(())
        }
    }

    fn idle_phase(&self) -> Phase {
        if self.calibrated {
            Phase::Calibrated
        } else {
            Phase::Uncalibrated
        }
    }

    /// State after `cmd`, or the reason it is refused.
    pub fn next(&self, cmd: &Command) -> Result<Workflow> {
        let mut w = *self;
        match cmd {
            Command::ListDevices | Command::GetState | Command::ListArtifacts => {}
            Command::SelectDevice { .. }
            | Command::SetSpec(_)
            | Command::SaveTestSignal
            | Command::UpdateSettings { .. }
            | Command::Memo5s => self.idle()?,
            Command::CalibStart => {
                self.idle()?;
                w.calibrating = true;
            }
            Command::CalibStop => {
                if !self.calibrating {
                    return Err(refuse("calibration loop is not running"));
                }
                w.calibrating = false;
            }
            Command::BindReference { .. } => {
                if !self.calibrating {
                    return Err(refuse("start the calibration loop before binding a reference"));
                }
                if self.calibrated {
                    return Err(refuse("already calibrated; reset first"));
                }
                w.calibrated = true;
                if w.phase == Phase::Uncalibrated {
                    w.phase = Phase::Calibrated;
                }
            }
            Command::ResetCalibration => {
                self.idle()?;
                if self.phase == Phase::Recorded {
                    return Err(refuse("save or discard the recording before resetting calibration"));
                }
                w.calibrated = false;
                w.phase = Phase::Uncalibrated;
            }
            Command::VoiceCheckStart => {
                self.idle()?;
                w.resume = self.phase;
                w.phase = Phase::VoiceCheck;
            }
            Command::VoiceCheckStop => {
                if self.phase != Phase::VoiceCheck {
                    return Err(refuse("voice check is not running"));
                }
                w.phase = self.resume;
            }
            Command::TestStart => {
                self.idle()?;
                if !self.calibrated {
                    return Err(refuse("calibrate before starting a test"));
                }
                w.phase = Phase::Testing;
            }
            Command::TestStop => {
                if self.phase != Phase::Testing {
                    return Err(refuse("no test is running"));
                }
                w.phase = self.idle_phase();
            }
            Command::Play => {
                if !self.can_play() {
                    return Err(refuse("nothing recorded to play"));
                }
                w.playing = true;
            }
            Command::PlayStop => {
                if !self.playing {
                    return Err(refuse("playback is not running"));
                }
                w.playing = false;
            }
            Command::Save => {
                if !self.can_save() {
                    return Err(refuse("no unsaved recording"));
                }
                w.phase = Phase::Saved;
            }
            Command::GetAnalysis { artifact } => {
                if artifact.is_none() && self.phase != Phase::Saved {
                    return Err(Error::NotSaved("current recording".into()));
                }
            }
        }
        Ok(w)
    }

    pub fn complete(&self, c: Completion) -> Workflow {
        let mut w = *self;
        match c {
            Completion::TestFinished if self.phase == Phase::Testing => w.phase = Phase::Recorded,
            Completion::TestFailed if self.phase == Phase::Testing => w.phase = self.idle_phase(),
            Completion::PlaybackFinished => w.playing = false,
            Completion::CalibrationFinished => w.calibrating = false,
            Completion::VoiceCheckFinished if self.phase == Phase::VoiceCheck => w.phase = self.resume,
            _ => {}
        }
        w
    }

    /// Phase-level invariants; used by the exhaustive sequence tests.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        if self.phase == Phase::Testing && !self.calibrated {
            return Err("testing while uncalibrated".into());
        }
        if self.phase == Phase::Uncalibrated && self.calibrated {
            return Err("calibrated flag set in uncalibrated phase".into());
        }
        if self.phase == Phase::Calibrated && !self.calibrated {
            return Err("calibrated phase without calibration".into());
        }
        let loops = [self.calibrating, self.playing, self.phase == Phase::VoiceCheck, self.phase == Phase::Testing];
        if loops.iter().filter(|&&b| b).count() > 1 {
            return Err("more than one loop active".into());
        }
        Ok(())
    }
}

/// One input to the workflow: a client command or an engine completion.
#[derive(Debug, Clone, PartialEq)]
pub enum Step {
    Cmd(Command),
    Done(Completion),
}

/// Commands and completions that can change the workflow, one of each.
pub fn alphabet() -> Vec<Step> {
    use crate::calibration::ReferenceLevel;
    vec![
        Step::Cmd(Command::CalibStart),
        Step::Cmd(Command::CalibStop),
        Step::Cmd(Command::BindReference {
            reference: ReferenceLevel::Spl70,
        }),
        Step::Cmd(Command::ResetCalibration),
        Step::Cmd(Command::VoiceCheckStart),
        Step::Cmd(Command::VoiceCheckStop),
        Step::Cmd(Command::TestStart),
        Step::Cmd(Command::TestStop),
        Step::Cmd(Command::Play),
        Step::Cmd(Command::PlayStop),
        Step::Cmd(Command::Save),
        Step::Cmd(Command::Memo5s),
        Step::Cmd(Command::GetAnalysis { artifact: None }),
        Step::Done(Completion::TestFinished),
        Step::Done(Completion::TestFailed),
        Step::Done(Completion::PlaybackFinished),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Exploration {
    pub sequences: u64,
    pub accepted_commands: u64,
    pub refused_commands: u64,
}

/// Safety rules for one accepted transition.
fn check_step(before: &Workflow, step: &Step, after: &Workflow) -> std::result::Result<(), String> {
    if let Step::Cmd(cmd) = step {
        match cmd {
            Command::GetAnalysis { artifact: None } if before.phase != Phase::Saved => {
                return Err("analysis released for an unsaved recording".into());
            }
            Command::TestStart if !before.calibrated => return Err("test started without calibration".into()),
            Command::Save if before.phase != Phase::Recorded => return Err("save outside recorded".into()),
            Command::Play if !matches!(before.phase, Phase::Recorded | Phase::Saved) => {
                return Err("play without a recording".into());
            }
            _ => {}
        }
    }
    after.check_invariants()
}

/// Run every sequence of exactly `max_len` steps from the initial state
/// (shorter sequences are their prefixes). Returns the first violation.
pub fn explore(max_len: usize) -> std::result::Result<Exploration, (Vec<Step>, String)> {
    let steps = alphabet();
    let mut stats = Exploration {
        sequences: 0,
        accepted_commands: 0,
        refused_commands: 0,
    };
    let mut path = Vec::with_capacity(max_len);
    fn walk(
        w: Workflow,
        depth: usize,
        steps: &[Step],
        path: &mut Vec<usize>,
        stats: &mut Exploration,
    ) -> std::result::Result<(), (Vec<usize>, String)> {
        if depth == 0 {
            stats.sequences += 1;
            return Ok(());
        }
        for (i, step) in steps.iter().enumerate() {
            path.push(i);
            let (next, accepted) = match step {
                Step::Cmd(c) => match w.next(c) {
                    Ok(n) => {
                        stats.accepted_commands += 1;
                        (n, true)
                    }
                    Err(_) => {
                        stats.refused_commands += 1;
                        (w, false)
                    }
                },
                Step::Done(c) => (w.complete(*c), true),
            };
            if accepted {
                check_step(&w, step, &next).map_err(|m| (path.clone(), m))?;
            }
            walk(next, depth - 1, steps, path, stats)?;
            path.pop();
        }
        Ok(())
    }
    let start = Workflow::default();
    start.check_invariants().map_err(|m| (Vec::new(), m))?;
    walk(start, max_len, &steps, &mut path, &mut stats)
        .map_err(|(p, m)| (p.into_iter().map(|i| steps[i].clone()).collect(), m))?;
    Ok(stats)
}
