//! Acceptance suite, one line per criterion. Runs with its own harness so the
//! PASS/FAIL lines are always printed; exits non-zero if any criterion fails.
//!
//! Reference values come from small oracles in this file (direct DFTs,
//! direct correlation, direct convolution), not from the library's helpers.

use std::f64::consts::TAU;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde_json::{json, Value};

use voxresp::analyzer::{self, RecordingPair};
use voxresp::calibration::{Calibrator, LevelHistory, ReferenceLevel};
use voxresp::fo_tracker;
use voxresp::orthomix::{self, CodeMatrix, CombinationCatalog, MatchedKernel, SegmentLayout};
use voxresp::rt_engine::{
    BufferSource, CaptureSink, Engine, LoopMode, MicSource, SilenceSource, SimClock, SimulatedDevice, BLOCK_SIZE,
    MEMO_SECONDS, SAMPLE_RATE,
};
use voxresp::service::workflow;
use voxresp::service::{Service, ServiceConfig, SimRig};
use voxresp::session;
use voxresp::sim_subject::{self, SubjectModel};
use voxresp::stimulus::{self, Normalization, PhaseAlloc, SignalType, StimulusSpec};

type Outcome = Result<(bool, String), String>;

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn db(x: f64) -> f64 {
    20.0 * x.log10()
}

fn peak(x: &[f64]) -> f64 {
    x.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

fn rms(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

fn fft(x: &[f64], n: usize) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    buf.resize(n, Complex64::new(0.0, 0.0));
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    buf
}

fn ifft(mut spec: Vec<Complex64>) -> Vec<f64> {
    let n = spec.len();
    FftPlanner::new().plan_fft_inverse(n).process(&mut spec);
    spec.into_iter().map(|c| c.re / n as f64).collect()
}

/// Amplitude of the sinusoid at exactly bin `k` of an `x.len()`-point DFT.
fn bin_amplitude(x: &[f64], k: usize) -> f64 {
    let n = x.len();
    let (mut re, mut im) = (0.0, 0.0);
    for (i, v) in x.iter().enumerate() {
        let a = TAU * (k * i % n) as f64 / n as f64;
        re += v * a.cos();
        im -= v * a.sin();
    }
    2.0 * (re * re + im * im).sqrt() / n as f64
}

fn circular_convolve(x: &[f64], h: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut hp = vec![0.0; n];
    for (i, v) in h.iter().enumerate() {
        hp[i % n] += v;
    }
    let a = fft(x, n);
    let b = fft(&hp, n);
    ifft(a.iter().zip(&b).map(|(p, q)| p * q).collect())
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let ab: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let aa: f64 = a.iter().map(|x| x * x).sum();
    let bb: f64 = b.iter().map(|x| x * x).sum();
    ab / (aa * bb).sqrt()
}

fn median(v: &[f64]) -> f64 {
    let mut s: Vec<f64> = v.iter().copied().filter(|x| x.is_finite()).collect();
    s.sort_by(|a, b| a.total_cmp(b));
    s[s.len() / 2]
}

fn a1() -> Outcome {
    let cat = CombinationCatalog::default_catalog();
    let units: Vec<_> = (0..cat.seeds().len()).map(|i| cat.unit(i).map_err(err)).collect::<Result<_, _>>()?;
    let l = units[0].len();
    let spectra: Vec<Vec<Complex64>> = units.iter().map(|u| fft(u.samples(), 2 * l)).collect();

    let mut flat = 0.0f64;
    let mut side = f64::NEG_INFINITY;
    for u in &units {
        for c in fft(u.samples(), l) {
            flat = flat.max(db(c.norm()).abs());
        }
    }
    for s in &spectra {
        let r = ifft(s.iter().map(|c| c * c.conj()).collect());
        let sl = r[1..].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        side = side.max(db(sl / r[0]));
    }
    let mut cross = f64::NEG_INFINITY;
    for i in 0..units.len() {
        for j in i + 1..units.len() {
            let r = ifft(spectra[i].iter().zip(&spectra[j]).map(|(a, b)| a * b.conj()).collect());
            let norm = (units[i].energy() * units[j].energy()).sqrt();
            cross = cross.max(db(peak(&r) / norm));
        }
    }
    let ok = flat <= 0.5 && side <= -40.0 && cross <= -20.0;
    Ok((
        ok,
        format!(
            "{} kernels: flatness {flat:.2e} dB, sidelobes {side:.1} dB, cross-seed {cross:.1} dB",
            units.len()
        ),
    ))
}

/// Recovery of an observation that holds only kernel `u` coded with `row`,
/// first with the code set containing `row`, then with the set lacking it.
fn code_leakage(u: &voxresp::capricep::UnitCapricep, row: usize, period: usize, n_periods: usize) -> Outcome {
    const H: [[i8; 4]; 4] = [[1, 1, 1, 1], [1, -1, 1, -1], [1, 1, -1, -1], [1, -1, -1, 1]];
    let cycle = period * n_periods;
    let mut obs = vec![0.0; cycle];
    for m in 0..n_periods {
        let w = H[row][m % 4] as f64;
        for (j, v) in u.samples().iter().enumerate() {
            obs[(m * period + j + cycle - u.center()) % cycle] += w * v;
        }
    }
    let others: Vec<[i8; 4]> = (0..4).filter(|&r| r != row).map(|r| H[r]).collect();
    let matched = CodeMatrix::from_rows([H[0], H[1], H[2]]).map_err(err)?;
    let mismatched = CodeMatrix::from_rows([others[0], others[1], others[2]]).map_err(err)?;
    let k = MatchedKernel::from_unit(u);
    let kernels = [k.clone(), k.clone(), k];
    let layout = SegmentLayout {
        period: period as f64,
        origin: 0.0,
        first_pulse: 0,
        n_periods,
        pre_roll: period / 4,
        segment_len: period,
        circular: true,
    };
    let a = orthomix::recover_with_kernels(&obs, &kernels, &matched, &layout).map_err(err)?;
    let b = orthomix::recover_with_kernels(&obs, &kernels, &mismatched, &layout).map_err(err)?;
    let leak = db(peak(&b.linear) / peak(&a.linear));
    Ok((leak <= -30.0, format!("{leak:.1}")))
}

fn a2() -> Outcome {
    let cat = CombinationCatalog::default_catalog();
    let period = (0.5 * SAMPLE_RATE) as usize;
    let mix = orthomix::build_mixture(&cat, 0, period, 20.0, 100.0, 7).map_err(err)?;
    let cycle = mix.n_periods * period;
    let stim = &mix.m_cents[..cycle];

    // identity and a delayed, smoothed system
    let delay = (0.15 * SAMPLE_RATE) as usize;
    let mut h = vec![0.0; delay + 2400];
    let taps: Vec<f64> = (0..2400).map(|i| (-(i as f64) / 400.0).exp()).collect();
    let sum: f64 = taps.iter().sum();
    for (i, t) in taps.iter().enumerate() {
        h[delay + i] = t / sum;
    }
    let mut worst_tv = f64::NEG_INFINITY;
    for obs in [stim.to_vec(), circular_convolve(stim, &h)] {
        let r = orthomix::recover_responses(&obs, &cat, 0, &mix.codes, period, mix.n_periods).map_err(err)?;
        worst_tv = worst_tv.max(db(peak(&r.random_tv) / peak(&r.linear)));
    }

    let kernels = cat.kernels(0).map_err(err)?;
    let mut leaks = Vec::new();
    let mut leak_ok = true;
    for (row, u) in kernels.iter().enumerate() {
        let (ok, text) = code_leakage(u, row, period, 8)?;
        leak_ok &= ok;
        leaks.push(text);
    }
    Ok((
        worst_tv <= -40.0 && leak_ok,
        format!(
            "random_tv {worst_tv:.1} dB re linear peak ({} averages), mismatched-code leakage [{}] dB",
            mix.n_periods * 3,
            leaks.join(", ")
        ),
    ))
}

fn a3() -> Outcome {
    let fs = SAMPLE_RATE;
    let fo = 110.0;
    let comps = stimulus::component_table(SignalType::Sines, fo, fs).map_err(err)?;
    let theta = stimulus::phase_offsets(PhaseAlloc::Sch, &comps);
    let mut ok = true;
    let mut parts = Vec::new();
    let mut worst_harm = 0.0f64;
    for (offset, tol) in [(0.0, 0.5), (100.0, 2.0), (1200.0, 2.0)] {
        let m = vec![offset; (2.0 * fs) as usize];
        let x = stimulus::synthesize_fm(&comps, &theta, fo, &m, fs).map_err(err)?;
        let f1 = fo * (offset / 1200.0f64).exp2();
        let traj = fo_tracker::track(&x, fs, fo_tracker::HOP_OFFLINE, f1).map_err(err)?;
        if traj.voiced_count() != traj.frames.len() {
            return Ok((false, format!("{offset} cents: unvoiced frames")));
        }
        let e = traj
            .frames
            .iter()
            .map(|f| (1200.0 * (f.fo_hz / fo).log2() - offset).abs())
            .fold(0.0, f64::max);
        ok &= e <= tol;
        parts.push(format!("+{offset} c err {e:.2e}"));

        let mid = x.len() / 2;
        let seg = &x[mid..mid + fo_tracker::WINDOW + 1];
        let base = fo_tracker::estimate_if_frame(seg, fs, 0.5 * f1, 1.5 * f1).map_err(err)?.fo_hz;
        for c in &comps {
            let k = c.harmonic as f64;
            let fk = fo_tracker::estimate_if_frame(seg, fs, (k - 0.5) * f1, (k + 0.5) * f1)
                .map_err(err)?
                .fo_hz;
            worst_harm = worst_harm.max((fk / (k * base) - 1.0).abs());
        }
    }
    ok &= worst_harm <= 1e-3;
    Ok((ok, format!("{}; harmonicity {:.2e} %", parts.join(", "), 100.0 * worst_harm)))
}

fn a4() -> Outcome {
    let fs = SAMPLE_RATE;
    let fo = 100.0; // 441 samples per period, so harmonics fall on DFT bins
    let comps = stimulus::component_table(SignalType::Sines, fo, fs).map_err(err)?;
    if comps.len() != 20 {
        return Err(format!("expected 20 components, got {}", comps.len()));
    }
    let n = fs as usize;
    let zeros = vec![0.0; n];
    let mut crest = Vec::new();
    let mut amp_err = 0.0f64;
    for &alloc in PhaseAlloc::ALL {
        let theta = stimulus::phase_offsets(alloc, &comps);
        let x = stimulus::synthesize_fm(&comps, &theta, fo, &zeros, fs).map_err(err)?;
        crest.push((alloc, peak(&x) / rms(&x)));
        for c in &comps {
            let a = bin_amplitude(&x, c.harmonic * 100);
            amp_err = amp_err.max((a - c.amplitude).abs());
        }
    }
    let get = |p: PhaseAlloc| crest.iter().find(|c| c.0 == p).map(|c| c.1).unwrap_or(f64::NAN);
    let (sch, sin) = (get(PhaseAlloc::Sch), get(PhaseAlloc::Sin));
    Ok((
        sch < sin && amp_err <= 1e-6,
        format!("crest SCH {sch:.3} < SIN {sin:.3}; max amplitude error {amp_err:.1e}"),
    ))
}

fn a5() -> Outcome {
    let cat = CombinationCatalog::default_catalog();
    let spec = |norm| StimulusSpec {
        normalization: norm,
        seed: 11,
        ..StimulusSpec::default()
    };
    let pk = peak(&stimulus::make_test_signal(&spec(Normalization::Peak), &cat).map_err(err)?.samples);
    let r = db(rms(&stimulus::make_test_signal(&spec(Normalization::TotalRms), &cat).map_err(err)?.samples));

    // unmodulated, at an f_o whose period divides the length, so the
    // fundamental sits on one DFT bin
    let flat = StimulusSpec {
        fo: 100.0,
        depth: 0.0,
        ..spec(Normalization::Component)
    };
    let mut comp = Vec::new();
    for t in [SignalType::Sines, SignalType::Sine] {
        let s = StimulusSpec { signal_type: t, ..flat.clone() };
        let x = stimulus::make_test_signal(&s, &cat).map_err(err)?.samples;
        let periods = x.len() / 441;
        comp.push(db(bin_amplitude(&x[..periods * 441], periods)));
    }
    let ok = (pk - 0.8).abs() <= 1e-6
        && (r + 26.0).abs() <= 0.01
        && comp.iter().all(|c| (c + 30.0).abs() <= 0.01);
    Ok((
        ok,
        format!(
            "PEAK {pk:.8}; TOTAL_RMS {r:.4} dBFS; COMPONENT fundamental {:.4} / {:.4} dBFS (SINES / SINE)",
            comp[0], comp[1]
        ),
    ))
}

fn a6() -> Outcome {
    let fs = SAMPLE_RATE;
    let tone = |f: f64, a: f64| -> Vec<f64> { (0..fs as usize).map(|i| a * (TAU * f * i as f64 / fs).sin()).collect() };
    let freqs = [80.0, 97.3, 110.0, 146.83, 196.0, 220.0, 311.13, 440.0, 523.25, 659.26, 777.7, 880.0];
    let mut worst = 0.0f64;
    for &f in &freqs {
        let t = fo_tracker::track(&tone(f, 0.5), fs, fo_tracker::HOP_OFFLINE, f).map_err(err)?;
        if t.voiced_count() != t.frames.len() {
            return Ok((false, format!("{f} Hz has unvoiced frames")));
        }
        for fr in &t.frames {
            worst = worst.max((fr.fo_hz - f).abs());
        }
    }

    let f = 187.3;
    let base = fo_tracker::track(&tone(f, 0.5), fs, fo_tracker::HOP_OFFLINE, f).map_err(err)?;
    let mut exact = true;
    for a in [0.25, 0.0625, 2f64.powi(-6)] {
        let t = fo_tracker::track(&tone(f, 0.5 * a / 0.5), fs, fo_tracker::HOP_OFFLINE, f).map_err(err)?;
        exact &= t.frames.iter().zip(&base.frames).all(|(p, q)| p.fo_hz.to_bits() == q.fo_hz.to_bits());
    }
    let x = tone(f, 0.5);
    let scaled: Vec<f64> = x.iter().map(|v| 0.3 * v).collect();
    let t = fo_tracker::track(&scaled, fs, fo_tracker::HOP_OFFLINE, f).map_err(err)?;
    let drift = t
        .frames
        .iter()
        .zip(&base.frames)
        .map(|(p, q)| (p.fo_hz - q.fo_hz).abs())
        .fold(0.0, f64::max);

    let silence = fo_tracker::track(&vec![0.0; fs as usize], fs, fo_tracker::HOP_OFFLINE, 220.0).map_err(err)?;
    let silent = silence.voiced_count() == 0 && silence.frames.iter().all(|f| f.fo_hz.is_nan());

    Ok((
        worst <= 1e-3 && exact && drift <= 1e-9 && silent,
        format!(
            "{} tones 80-880 Hz max error {worst:.2e} Hz; power-of-two scaling bit-identical {exact}, x0.3 drift {drift:.1e} Hz; silence unvoiced {silent}",
            freqs.len()
        ),
    ))
}

/// Direct convolution of one period of the stimulation trace (frame spacing
/// `dt`) with the model's response taps, with linear interpolation for
/// fractional delays.
fn oracle_linear(stim: &[f64], model: &SubjectModel, dt: f64, fs: f64) -> Vec<f64> {
    let n = stim.len();
    (0..n)
        .map(|i| {
            let mut s = 0.0;
            for (j, &g) in model.ir.iter().enumerate() {
                let d = (model.latency + (j as f64 - model.ir_origin as f64) * model.ir_hop as f64 / fs) / dt;
                let pos = (i as f64 - d).rem_euclid(n as f64);
                let k = pos.floor() as usize;
                let t = pos - k as f64;
                s += g * (stim[k % n] * (1.0 - t) + stim[(k + 1) % n] * t);
            }
            s
        })
        .collect()
}

fn a7() -> Outcome {
    let fs = SAMPLE_RATE;
    let cat = CombinationCatalog::default_catalog();
    let spec = StimulusSpec {
        target_fo: 220.0,
        seed: 3,
        ..StimulusSpec::default()
    };
    let test = stimulus::make_test_signal(&spec, &cat).map_err(err)?;
    let run = |jitter: f64| -> Result<analyzer::AnalysisResult, String> {
        let mut model = SubjectModel::smoothed(spec.target_fo, 0.15, 0.08, 1.0, fs);
        model.jitter_rms = jitter;
        model.jitter_seed = 5;
        let voice = sim_subject::simulate_subject(&test, &model, 1.0).map_err(err)?;
        let rec = RecordingPair {
            voice,
            loopback: test.samples.clone(),
            fs,
            spec: spec.clone(),
            calibration_gain: None,
        };
        analyzer::analyze_recording(&rec, &cat).map_err(err)
    };
    let clean = run(0.0)?;
    let d = &clean.decomposition;
    let model = SubjectModel::smoothed(spec.target_fo, 0.15, 0.08, 1.0, fs);
    let dt = fo_tracker::HOP_OFFLINE as f64 / fs;
    let corr = correlation(&d.linear, &oracle_linear(&d.stimulation, &model, dt, fs));
    let lag = d.linear_peak_lag();

    let levels = [5.0, 10.0, 20.0];
    let mut tv = Vec::new();
    for &j in &levels {
        tv.push(median(&run(j)?.decomposition.random_tv));
    }
    let monotone = tv.windows(2).all(|w| w[1] > w[0]);
    Ok((
        corr >= 0.95 && (lag - 0.15).abs() <= 0.01 && monotone,
        format!(
            "correlation {corr:.4}, latency {lag:.4} s, random_tv median at jitter {levels:?} cents = [{:.3}, {:.3}, {:.3}] cents",
            tv[0], tv[1], tv[2]
        ),
    ))
}

fn a8() -> Outcome {
    let fs = SAMPLE_RATE;
    let cat = CombinationCatalog::default_catalog();
    let spec = StimulusSpec {
        seed: 17,
        ..StimulusSpec::default()
    };
    let test = stimulus::make_test_signal(&spec, &cat).map_err(err)?;
    let voice = sim_subject::simulate_subject(&test, &SubjectModel::smoothed(110.0, 0.15, 0.08, 1.0, fs), 1.0).map_err(err)?;
    let n = test.samples.len();
    let dev = SimulatedDevice::new(fs, BLOCK_SIZE)
        .with_clock(SimClock::Free { deadline_speed: 2.0 })
        .with_mic(MicSource::Samples(Arc::new(voice.clone())));
    let engine = Engine::simulated(dev);
    let emitted = Arc::new(test.samples.clone());
    let mut cap = CaptureSink::new(n);
    let r = engine
        .run_duplex(&mut BufferSource::new(Arc::clone(&emitted)), &mut cap, LoopMode::ResponseTest, Some(spec.duration))
        .map_err(err)?;
    let test_ok = r.underruns == 0
        && r.speed >= 2.0
        && cap.voice.len() == 882_000
        && cap.loopback.len() == 882_000
        && cap.loopback == *emitted
        && cap.voice == voice;

    let memo_engine = Engine::simulated(SimulatedDevice::new(fs, BLOCK_SIZE).with_clock(SimClock::Free { deadline_speed: 2.0 }));
    let mut memo = CaptureSink::new((MEMO_SECONDS * fs) as usize);
    let mr = memo_engine
        .run_duplex(&mut SilenceSource, &mut memo, LoopMode::Memo, Some(MEMO_SECONDS))
        .map_err(err)?;
    let memo_ok = memo.voice.len() == 220_500 && mr.underruns == 0;

    Ok((
        test_ok && memo_ok,
        format!(
            "test loop {} blocks, {} samples/channel, {} underruns, {:.0}x real time, loop-back bit-exact {}; memo {} samples",
            r.blocks,
            cap.voice.len(),
            r.underruns,
            r.speed,
            cap.loopback == *emitted,
            memo.voice.len()
        ),
    ))
}

fn fast_service(root: &std::path::Path, room_gain: f64) -> Result<Service, String> {
    let mut cfg = ServiceConfig::new(root);
    cfg.trial_seed = 99;
    cfg.rig = SimRig {
        clock: SimClock::Paced { speed: 50.0 },
        room_gain,
        ..SimRig::default()
    };
    Service::new(cfg).map_err(err)
}

fn call(svc: &mut Service, cmd: &str, params: Value) -> Value {
    let text = json!({"id": cmd, "cmd": cmd, "params": params}).to_string();
    serde_json::to_value(svc.handle_text(&text)).expect("reply serializes")
}

fn calibrate(svc: &mut Service, reference: f64) -> Result<Value, String> {
    let r = call(svc, "calib_start", json!({}));
    if r["ok"] != true {
        return Err(format!("calib_start refused: {r}"));
    }
    // at 50x, 2 s of meter history arrive in 40 ms
    let until = Instant::now() + Duration::from_secs(5);
    loop {
        std::thread::sleep(Duration::from_millis(20));
        svc.poll();
        let r = call(svc, "bind_reference", json!({ "reference": reference }));
        if r["ok"] == true {
            call(svc, "calib_stop", json!({}));
            return Ok(r["payload"]["calibration"].clone());
        }
        if Instant::now() > until {
            return Err(format!("calibration never stabilized: {r}"));
        }
    }
}

fn a9() -> Outcome {
    let x = workflow::explore(6).map_err(|(seq, msg)| format!("{msg} after {seq:?}"))?;
    let explored = x.sequences == 16u64.pow(6);

    // offset arithmetic on a steady -30 dBFS meter
    let mut h = LevelHistory::new();
    for i in 0..=50 {
        h.push(i as f64 * BLOCK_SIZE as f64 / SAMPLE_RATE, -30.0);
    }
    let mut c = Calibrator::new();
    let g = c.bind(&h, ReferenceLevel::Spl70, chrono::Utc::now()).map_err(err)?.clone();
    let reads = g.dbfs_to_spl(-25.0);
    let arithmetic = reads == 75.0 && g.offset_db == 100.0;

    // the same rules on a live service
    let dir = tempfile::tempdir().map_err(err)?;
    let mut svc = fast_service(dir.path(), 10f64.powf(-0.5))?;
    let early = call(&mut svc, "get_analysis", json!({}));
    let no_cal = call(&mut svc, "test_start", json!({}));
    let refused_early = early["ok"] == false
        && early["error"]["code"] == "invalid-state"
        && early["error"]["reason"] == "not-saved"
        && no_cal["ok"] == false
        && no_cal["error"]["code"] == "invalid-state";
    let cal = calibrate(&mut svc, 70.0)?;
    let measured = cal["measured_dbfs"].as_f64().unwrap_or(f64::NAN);
    let offset = cal["offset_db"].as_f64().unwrap_or(f64::NAN);
    let live_offset = offset == 70.0 - measured && (measured + 30.0).abs() < 0.5;

    let started = call(&mut svc, "test_start", json!({}))["ok"] == true;
    let during = call(&mut svc, "get_analysis", json!({}));
    svc.wait_idle(Duration::from_secs(30));
    let recorded = call(&mut svc, "get_analysis", json!({}));
    let saved = call(&mut svc, "save", json!({}))["ok"] == true;
    svc.wait_idle(Duration::from_secs(60));
    let after = call(&mut svc, "get_analysis", json!({}));
    let live = refused_early
        && started
        && during["error"]["reason"] == "not-saved"
        && recorded["error"]["reason"] == "not-saved"
        && saved
        && after["ok"] == true;

    Ok((
        explored && arithmetic && live_offset && live,
        format!(
            "{} sequences ({} accepted, {} refused commands), no violation; bind(-30, 70) then -25 dBFS reads {reads} dB SPL; live bind {measured:.2} dBFS offset {offset:.2} dB; live analysis gated until save {live}",
            x.sequences, x.accepted_commands, x.refused_commands
        ),
    ))
}

fn a10() -> Outcome {
    let dir = tempfile::tempdir().map_err(err)?;
    let cond_path = dir.path().join("conditions.custom.json");
    std::fs::write(
        &cond_path,
        json!({
            "schema_version": 1,
            "fo_choices": [110.0, 220.0],
            "target_fo_choices": [110.0, 220.0],
            "depth": 80.0,
            "combination_ids": [2, 3, 4],
            "default_type": "MFND",
            "default_normalization": "TOTAL_RMS",
            "default_phase": "ALT"
        })
        .to_string(),
    )
    .map_err(err)?;
    let mut svc = fast_service(dir.path(), 10f64.powf(-0.5))?;
    let steps: Vec<(&str, Value)> = vec![
        ("update_settings", json!({ "path": cond_path })),
        ("set_spec", json!({ "fo": 220.0, "combination_id": 3, "presentation": "loudspeaker" })),
        ("save_test_signal", json!({})),
    ];
    for (cmd, p) in steps {
        let r = call(&mut svc, cmd, p);
        if r["ok"] != true {
            return Err(format!("{cmd}: {r}"));
        }
    }
    calibrate(&mut svc, 80.0)?;
    for (cmd, p) in [("set_spec", json!({ "target_fo": 220.0, "phase_alloc": "SCH" })), ("test_start", json!({}))] {
        let r = call(&mut svc, cmd, p);
        if r["ok"] != true {
            return Err(format!("{cmd}: {r}"));
        }
    }
    svc.wait_idle(Duration::from_secs(30));
    for cmd in ["save", "memo5s", "reset_calibration"] {
        let r = call(&mut svc, cmd, json!({}));
        if r["ok"] != true {
            return Err(format!("{cmd}: {r}"));
        }
    }
    calibrate(&mut svc, 70.0)?;
    call(&mut svc, "set_spec", json!({ "normalization": "PEAK" }));
    svc.wait_idle(Duration::from_secs(60));

    let live = svc.menu().clone();
    let live_text = serde_json::to_string(&live).map_err(err)?;
    let live_spec = svc.store().sidecar(svc.current_artifact().ok_or("no artifact")?).map_err(err)?.spec;
    let root = dir.path().to_path_buf();
    drop(svc);

    let state = session::replay(&root).map_err(err)?;
    let replay_text = serde_json::to_string(&state.menu).map_err(err)?;
    let rec = state
        .artifacts
        .iter()
        .find(|a| a.kind == session::ArtifactKind::Recording)
        .ok_or("no recording in lineage")?;
    let identical = state.menu == live && replay_text == live_text;
    let lineage = state.artifacts.len() == 3 && rec.sidecar.spec == live_spec;
    Ok((
        identical && lineage,
        format!(
            "{} log entries, {} artifacts; replayed menu identical {identical} ({} bytes); recording spec matches sidecar {}",
            state.entries,
            state.artifacts.len(),
            replay_text.len(),
            rec.sidecar.spec == live_spec
        ),
    ))
}

fn main() {
    let criteria: [(&str, &str, Option<f64>, fn() -> Outcome); 10] = [
        ("A1", "unit CAPRICEP invariants", Some(10.0), a1),
        ("A2", "orthogonal recovery round trip", Some(30.0), a2),
        ("A3", "FM synthesis fidelity", Some(30.0), a3),
        ("A4", "phase allocations", None, a4),
        ("A5", "normalization", None, a5),
        ("A6", "f_o tracker", None, a6),
        ("A7", "end-to-end oracle equivalence", Some(120.0), a7),
        ("A8", "real-time contract", None, a8),
        ("A9", "workflow safety", None, a9),
        ("A10", "provenance replay", None, a10),
    ];
    let mut failed = 0;
    for (id, title, limit, f) in criteria {
        let t = Instant::now();
        let outcome = f();
        let secs = t.elapsed().as_secs_f64();
        let (ok, detail) = match outcome {
            Ok((ok, d)) => (ok, d),
            Err(e) => (false, format!("error: {e}")),
        };
        let in_time = limit.map_or(true, |l| secs < l);
        let pass = ok && in_time;
        let budget = limit.map(|l| format!(", limit {l:.0} s")).unwrap_or_default();
        println!(
            "{} {id} {title}: {detail} ({secs:.2} s{budget})",
            if pass { "PASS" } else { "FAIL" }
        );
        if !pass {
            failed += 1;
        }
    }
    println!("acceptance: {} passed, {failed} failed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
