//! Trials: request generation, plan execution and joint timing with
//! background load.

use rand::Rng;
use rand_distr::{Distribution, Exp};

use super::kernel::{simulate, Job, Resource, Site, Task};
use super::compute_time;
use crate::channel::{transmission_time, LinkChannels, LinkNoise};
use crate::config::{BackgroundLoad, ScenarioConfig};
use crate::content::{ContentGrid, GenRequest, ProtocolId};
use crate::error::{MegError, Result};
use crate::metrics::{quality, OverheadRecord, QualityRecord};
use crate::pipeline::Pipeline;
use crate::protocol::{build_plan, execute_values, Action, ExecEnv, ProtocolPlan, Transcript};
use crate::rng;

/// One request of one trial under one protocol.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub trial: usize,
    pub protocol: ProtocolId,
    pub request_id: u64,
    pub arrival: f64,
    pub response_time: f64,
    pub overhead: OverheadRecord,
    pub quality: QualityRecord,
    pub generation_phase: f64,
    pub input_image: ContentGrid,
    pub transcript: Transcript,
}

/// Maps every plan step onto the resource it occupies and for how long.
pub fn plan_job(plan: &ProtocolPlan, env: &ExecEnv<'_>, arrival: f64) -> Result<Job> {
    let tasks = plan
        .steps
        .iter()
        .map(|step| {
            let (resource, duration) = match &step.action {
                Action::Transmit(t) => transmit_task(t, env.channels)?,
                action => {
                    let device = env.devices.get(step.site)?;
                    (Resource::Device(step.site), compute_time(action, env.work, device))
                }
            };
            Ok(Task {
                resource,
                duration,
                depends_on: step.depends_on.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Job { arrival, tasks })
}

fn transmit_task(t: &crate::protocol::Transmission, channels: &LinkChannels) -> Result<(Resource, f64)> {
    let direction = t.direction();
    let mut duration = 0.0f64;
    for &dst in &t.dst {
        let spec = channels.spec(t.link_for(dst), direction);
        duration = duration.max(transmission_time(t.payload.bits, spec)?);
    }
    let resource = match (t.src, t.dst.as_slice()) {
        (Site::Ue, [single]) => Resource::Link {
            es: t.link_for(*single),
            direction,
        },
        (Site::Ue, _) => Resource::Broadcast,
        (Site::Es(es), _) => Resource::Link { es, direction },
    };
    Ok((resource, duration))
}

/// Uniform random image for one request.
pub fn random_image(master_seed: u64, trial: usize, request: usize, height: usize, width: usize, bpp: u32) -> Result<ContentGrid> {
    let mut r = rng::stream(master_seed, &format!("trial/{trial}/request/{request}/image"));
    let values = (0..height * width).map(|_| r.random::<f64>()).collect();
    ContentGrid::new(height, width, values, bpp)
}

/// Poisson background jobs for one trial, one single-task job each.
pub fn background_jobs(config: &ScenarioConfig, trial: usize) -> Result<Vec<Job>> {
    let mut jobs = Vec::new();
    for (i, b) in config.background.iter().enumerate() {
        let BackgroundLoad {
            es,
            rate_per_s,
            work_units,
            horizon_s,
        } = *b;
        let device = config.devices.get(Site::Es(es))?;
        let exp = Exp::new(rate_per_s).map_err(|e| MegError::param(format!("background[{i}].rate_per_s"), e.to_string()))?;
        let mut r = rng::stream(config.master_seed, &format!("trial/{trial}/background/{i}"));
        let mut t = 0.0;
        loop {
            t += exp.sample(&mut r);
            if t >= horizon_s {
                break;
            }
            jobs.push(Job {
                arrival: t,
                tasks: vec![Task {
                    resource: Resource::Device(Site::Es(es)),
                    duration: work_units / device.compute_rate,
                    depends_on: Vec::new(),
                }],
            });
        }
    }
    Ok(jobs)
}

/// Runs every configured request of one trial under one protocol. Requests
/// and background jobs share devices and links.
pub fn run_trial(
    config: &ScenarioConfig,
    pipeline: &Pipeline,
    input: Option<&ContentGrid>,
    trial: usize,
    protocol: ProtocolId,
) -> Result<Vec<RunReport>> {
    let channels = config.link_channels();
    let env = ExecEnv {
        pipeline,
        channels: &channels,
        devices: &config.devices,
        work: &config.work,
        policy: config.selection,
    };
    let plan = build_plan(protocol, &config.plan_settings())?;
    let p = pipeline.params();

    let mut transcripts = Vec::with_capacity(config.arrivals.len());
    let mut inputs = Vec::with_capacity(config.arrivals.len());
    let mut jobs = Vec::with_capacity(config.arrivals.len());
    for (r, &arrival) in config.arrivals.iter().enumerate() {
        let image = match input {
            Some(img) => img.clone(),
            None => random_image(config.master_seed, trial, r, p.height, p.width, p.bits_per_pixel)?,
        };
        let request = GenRequest {
            request_id: r as u64,
            input_image: image.clone(),
            prompt: config.prompt.clone(),
            protocol_id: protocol,
            arrival_time: arrival,
        };
        let mut noise = LinkNoise::new(rng::derive_seed(
            config.master_seed,
            &format!("trial/{trial}/request/{r}/{protocol}"),
        ));
        transcripts.push(execute_values(&plan, &env, &mut noise, &request)?);
        inputs.push(image);
        jobs.push(plan_job(&plan, &env, arrival)?);
    }
    jobs.extend(background_jobs(config, trial)?);
    let timings = simulate(&jobs)?;

    transcripts
        .into_iter()
        .zip(inputs)
        .zip(timings)
        .map(|((mut transcript, input_image), timing)| {
            transcript.apply_timing(&timing.tasks, timing.completion);
            Ok(RunReport {
                trial,
                protocol,
                request_id: transcript.request_id,
                arrival: transcript.arrival,
                response_time: transcript.response_time(),
                overhead: OverheadRecord::from_transcript(&transcript),
                quality: quality(transcript.final_output(), transcript.reference_output())?,
                generation_phase: transcript.generation_phase(),
                input_image,
                transcript,
            })
        })
        .collect()
}

/// Every trial under every configured protocol, ordered by trial, protocol, request.
pub fn run_scenario(config: &ScenarioConfig) -> Result<Vec<RunReport>> {
    config.validate()?;
    let pipeline = Pipeline::build(config.pipeline.clone())?;
    let input = config.load_input_image(std::path::Path::new(""))?;
    let mut reports = Vec::with_capacity(config.trials * config.protocols.len() * config.arrivals.len());
    for trial in 0..config.trials {
        for &protocol in &config.protocols {
            reports.extend(run_trial(config, &pipeline, input.as_ref(), trial, protocol)?);
        }
    }
    Ok(reports)
}
