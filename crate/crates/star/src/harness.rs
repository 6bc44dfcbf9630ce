//! Client population simulation and benchmarks.
//!
//! A simulation samples measurements from a Zipf distribution, runs every
//! client through the randomness and message phases, submits (directly or
//! through the relay), closes the epoch, aggregates and checks the published
//! report against a plaintext counting oracle. The in-process mode calls the
//! services directly; the network mode goes through their HTTP interfaces.
//! Both share all of the cryptographic code.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::{Duration, Instant};

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use star_core::field::FieldId;
use star_core::message::{
    build_message, derive_randomness_lite, split_randomness, MessageTemplate, PayloadPolicy, Randomness, StarMessage,
};
use star_core::voprf::{blind, finalize, Evaluation, PublicKey, REQUEST_LEN, RESPONSE_LEN};

use crate::aggregation::{aggregate_parallel, AggregationService};
use crate::campaign::CampaignConfig;
use crate::error::{Result, StarError};
use crate::http::{self, ServerHandle, EPOCH_HEADER};
use crate::randomness::{RandomnessOptions, RandomnessService};
use crate::relay::{build_inner_request, encapsulate, Relay, RelayKeyConfig};
use crate::report::{parse_jsonl, render_jsonl, ParsedReport};
use crate::store::EpochStore;
use crate::zipf::{measurement_for_rank, sample_ranks, ZipfSampler, DEFAULT_EXPONENT, DEFAULT_SUPPORT};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Randomness from the VOPRF server.
    Star,
    /// Randomness derived locally from the measurement.
    Starlite,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Transport {
    Direct,
    Relay,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationSpec {
    pub clients: usize,
    pub campaign: CampaignConfig,
    pub mode: Mode,
    pub transport: Transport,
    pub seed: u64,
    pub zipf_support: usize,
    pub zipf_exponent: f64,
    pub verbose: bool,
}

impl Default for SimulationSpec {
    fn default() -> Self {
        SimulationSpec {
            clients: 10_000,
            campaign: CampaignConfig::default(),
            mode: Mode::Star,
            transport: Transport::Direct,
            seed: 0,
            zipf_support: DEFAULT_SUPPORT,
            zipf_exponent: DEFAULT_EXPONENT,
            verbose: false,
        }
    }
}

/// One client's plaintext input.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClientInput {
    pub x: Vec<u8>,
    pub aux: Vec<u8>,
}

/// Per-client aux payload: a hash chain of the client index, cut to `len`.
pub fn client_aux(seed: u64, index: usize, len: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(len);
    let mut block = Sha256::new()
        .chain_update(b"STAR-AUX")
        .chain_update(seed.to_be_bytes())
        .chain_update((index as u64).to_be_bytes())
        .finalize();
    while out.len() < len {
        out.extend_from_slice(&block);
        block = Sha256::digest(block);
    }
    out.truncate(len);
    out
}

/// Draws the clients' measurements (and aux payloads) for a simulation.
pub fn sample_clients(spec: &SimulationSpec) -> Vec<ClientInput> {
    let mut sampler = ZipfSampler::new(spec.zipf_support, spec.zipf_exponent, spec.seed);
    sample_ranks(spec.clients, &mut sampler)
        .into_iter()
        .enumerate()
        .map(|(i, rank)| ClientInput {
            x: measurement_for_rank(rank).to_vec(),
            aux: client_aux(spec.seed, i, spec.campaign.aux_fixed_len),
        })
        .collect()
}

/// Deterministic per-client RNG so runs are reproducible from the seed.
fn client_rng(seed: u64, index: usize, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.set_word_pos((index as u128) << 20);
    rng
}

/// The plaintext counting oracle: what a report must contain.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ExpectedReport {
    pub revealed: BTreeMap<Vec<u8>, (u64, Vec<Vec<u8>>)>,
    pub suppressed_groups: u64,
    pub suppressed_messages: u64,
}

impl ExpectedReport {
    pub fn count(inputs: &[ClientInput], threshold: usize, policy: &PayloadPolicy) -> Self {
        let mut by_x: BTreeMap<&[u8], Vec<Vec<u8>>> = BTreeMap::new();
        for c in inputs {
            by_x.entry(&c.x).or_default().push(policy.fit_aux(&c.aux));
        }
        let mut out = ExpectedReport::default();
        for (x, mut aux) in by_x {
            if aux.len() >= threshold {
                aux.sort();
                out.revealed.insert(x.to_vec(), (aux.len() as u64, aux));
            } else {
                out.suppressed_groups += 1;
                out.suppressed_messages += aux.len() as u64;
            }
        }
        out
    }

    /// Lists every difference from `report`; empty means exact agreement.
    pub fn diff(&self, report: &ParsedReport) -> Vec<String> {
        let mut diffs = Vec::new();
        let mut seen = 0;
        for m in &report.measurements {
            let Ok(x) = hex::decode(&m.x) else {
                diffs.push(format!("non-hex measurement {}", m.x));
                continue;
            };
            let aux: Vec<Vec<u8>> = m.aux.iter().filter_map(|a| BASE64.decode(a).ok()).collect();
            match self.revealed.get(&x) {
                None => diffs.push(format!("{} revealed with count {} but not expected", m.x, m.count)),
                Some((count, expected_aux)) => {
                    seen += 1;
                    if *count != m.count {
                        diffs.push(format!("{}: count {} != expected {count}", m.x, m.count));
                    }
                    if *expected_aux != aux {
                        diffs.push(format!("{}: aux list differs", m.x));
                    }
                    if m.skipped != 0 {
                        diffs.push(format!("{}: {} members skipped", m.x, m.skipped));
                    }
                }
            }
        }
        if seen != self.revealed.len() {
            diffs.push(format!("{} expected measurements missing", self.revealed.len() - seen));
        }
        let s = &report.summary;
        if s.suppressed_groups != self.suppressed_groups {
            diffs.push(format!("suppressed groups {} != {}", s.suppressed_groups, self.suppressed_groups));
        }
        if s.suppressed_messages != self.suppressed_messages {
            diffs.push(format!(
                "suppressed messages {} != {}",
                s.suppressed_messages, self.suppressed_messages
            ));
        }
        diffs
    }

    pub fn check(&self, report: &ParsedReport) -> Result<()> {
        let diffs = self.diff(report);
        if diffs.is_empty() {
            Ok(())
        } else {
            Err(StarError::OracleMismatch(diffs.join("; ")))
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub clients: usize,
    pub threshold: usize,
    pub field: String,
    pub mode: String,
    pub transport: String,
    pub network: bool,
    pub sampling_secs: f64,
    pub randomness_secs: f64,
    pub message_secs: f64,
    pub submission_secs: f64,
    pub aggregation_secs: f64,
    pub randomness_request_bytes: usize,
    pub randomness_response_bytes: usize,
    pub message_bytes_max: usize,
    pub inner_request_bytes_max: usize,
    /// Capsule size: what the relay receives.
    pub relay_visible_bytes_max: usize,
    /// Capsule plus the inner request it carries to the aggregator.
    pub relay_upload_bytes_max: usize,
    pub revealed_measurements: u64,
    pub revealed_messages: u64,
    pub suppressed_groups: u64,
    pub suppressed_messages: u64,
    pub oracle_match: bool,
    pub report_sha256: String,
}

#[derive(Clone, Debug)]
pub struct Simulation {
    pub bench: BenchReport,
    pub report_jsonl: Vec<u8>,
    pub expected: ExpectedReport,
}

#[derive(Default)]
struct PhaseTimes {
    sampling: Duration,
    randomness: Duration,
    message: Duration,
    submission: Duration,
    aggregation: Duration,
}

#[derive(Default)]
struct Sizes {
    message: usize,
    inner: usize,
    capsule: usize,
}

impl Sizes {
    fn merge(self, o: Sizes) -> Sizes {
        Sizes {
            message: self.message.max(o.message),
            inner: self.inner.max(o.inner),
            capsule: self.capsule.max(o.capsule),
        }
    }
}

fn finish(
    spec: &SimulationSpec,
    network: bool,
    times: PhaseTimes,
    sizes: Sizes,
    jsonl: Vec<u8>,
    expected: ExpectedReport,
) -> Result<Simulation> {
    let parsed = parse_jsonl(&jsonl)?;
    let diffs = expected.diff(&parsed);
    if !diffs.is_empty() {
        return Err(StarError::OracleMismatch(diffs.join("; ")));
    }
    let star = spec.mode == Mode::Star;
    let relayed = spec.transport == Transport::Relay;
    let s = &parsed.summary;
    let bench = BenchReport {
        clients: spec.clients,
        threshold: spec.campaign.threshold,
        field: spec.campaign.field.to_string(),
        mode: format!("{:?}", spec.mode).to_lowercase(),
        transport: format!("{:?}", spec.transport).to_lowercase(),
        network,
        sampling_secs: times.sampling.as_secs_f64(),
        randomness_secs: times.randomness.as_secs_f64(),
        message_secs: times.message.as_secs_f64(),
        submission_secs: times.submission.as_secs_f64(),
        aggregation_secs: times.aggregation.as_secs_f64(),
        randomness_request_bytes: if star { REQUEST_LEN } else { 0 },
        randomness_response_bytes: if star { RESPONSE_LEN } else { 0 },
        message_bytes_max: sizes.message,
        inner_request_bytes_max: if relayed { sizes.inner } else { 0 },
        relay_visible_bytes_max: if relayed { sizes.capsule } else { 0 },
        relay_upload_bytes_max: if relayed { sizes.capsule + sizes.inner } else { 0 },
        revealed_measurements: s.revealed_measurements,
        revealed_messages: s.revealed_messages,
        suppressed_groups: s.suppressed_groups,
        suppressed_messages: s.suppressed_messages,
        oracle_match: true,
        report_sha256: hex::encode(Sha256::digest(&jsonl)),
    };
    Ok(Simulation {
        bench,
        report_jsonl: jsonl,
        expected,
    })
}

/// Client side of the VOPRF exchange; `evaluate` carries the request to the server.
pub fn star_randomness<F>(x: &[u8], pk: &PublicKey, rng: &mut ChaCha20Rng, evaluate: F) -> Result<Randomness>
where
    F: FnOnce(&[u8; REQUEST_LEN]) -> Result<Vec<u8>>,
{
    let (request, state) = blind(x, rng)?;
    let response = evaluate(request.as_bytes())?;
    let output = finalize(pk, &Evaluation::from_bytes(&response)?, &state)?;
    Ok(split_randomness(&output)?)
}

pub fn lite_randomness(x: &[u8], campaign: &CampaignConfig) -> Result<Randomness> {
    Ok(split_randomness(&derive_randomness_lite(
        x,
        &campaign.hardening.to_core(),
    )?)?)
}

/// What a client uploads for one message.
pub struct Submission {
    pub message: Vec<u8>,
    /// Sealed inner request, when going through the relay.
    pub capsule: Option<Vec<u8>>,
    pub inner_len: usize,
}

/// Wraps serialized message bytes in an inner request sealed to the relay.
pub fn build_relay_capsule<R: rand::RngCore + rand::CryptoRng>(
    message: &[u8],
    relay: &RelayKeyConfig,
    rng: &mut R,
) -> Result<Vec<u8>> {
    Ok(encapsulate(&build_inner_request(message), relay, rng)?.to_bytes())
}

pub fn prepare_submission(
    message: &StarMessage,
    relay: Option<&RelayKeyConfig>,
    rng: &mut ChaCha20Rng,
) -> Result<Submission> {
    let message = message.to_bytes();
    match relay {
        None => Ok(Submission {
            message,
            capsule: None,
            inner_len: 0,
        }),
        Some(cfg) => Ok(Submission {
            capsule: Some(build_relay_capsule(&message, cfg, rng)?),
            inner_len: build_inner_request(&message).len(),
            message,
        }),
    }
}

fn build_all(
    spec: &SimulationSpec,
    inputs: &[ClientInput],
    randomness: &[Randomness],
    epoch: u64,
    relay: Option<&RelayKeyConfig>,
) -> Result<(Vec<Submission>, Sizes)> {
    let c = &spec.campaign;
    let policy = c.policy();
    let subs = inputs
        .par_iter()
        .zip(randomness)
        .enumerate()
        .map(|(i, (input, r))| {
            let mut rng = client_rng(spec.seed, i, 2);
            let msg = build_message(&input.x, &input.aux, r, c.threshold, &policy, c.field, epoch, &mut rng)?;
            prepare_submission(&msg, relay, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    let sizes = subs
        .iter()
        .map(|s| Sizes {
            message: s.message.len(),
            inner: s.inner_len,
            capsule: s.capsule.as_ref().map_or(0, Vec::len),
        })
        .fold(Sizes::default(), Sizes::merge);
    Ok((subs, sizes))
}

/// The three services wired together in one process.
#[derive(Debug, Clone)]
pub struct LocalServices {
    pub randomness: Arc<RandomnessService>,
    pub aggregation: Arc<AggregationService>,
    pub relay: Arc<Relay>,
}

impl LocalServices {
    pub fn new(campaign: &CampaignConfig, verbose: bool) -> Result<Self> {
        let randomness = Arc::new(RandomnessService::new(RandomnessOptions::default())?);
        let first = randomness.current_epoch() + campaign.epoch_offset;
        let aggregation = Arc::new(
            AggregationService::new(campaign.clone(), EpochStore::in_memory(), first)?.with_verbose(verbose),
        );
        Ok(LocalServices {
            randomness,
            aggregation,
            relay: Arc::new(Relay::generate()),
        })
    }

    /// Delivers one submission; relayed messages go through the relay's open path.
    pub fn submit(&self, sub: &Submission) -> Result<()> {
        match &sub.capsule {
            None => self.aggregation.handle_ingest(&sub.message),
            Some(capsule) => {
                self.relay.relay(capsule, |m| {
                    self.aggregation.handle_ingest(m)?;
                    Ok(200)
                })?;
                Ok(())
            }
        }
    }
}

/// Runs a whole campaign through in-process services.
pub fn run_simulation(spec: &SimulationSpec) -> Result<Simulation> {
    let services = LocalServices::new(&spec.campaign, spec.verbose)?;
    run_simulation_with(spec, &services)
}

pub fn run_simulation_with(spec: &SimulationSpec, services: &LocalServices) -> Result<Simulation> {
    spec.campaign.validate()?;
    let mut times = PhaseTimes::default();

    let t = Instant::now();
    let inputs = sample_clients(spec);
    times.sampling = t.elapsed();

    let t = Instant::now();
    let pk = PublicKey::from_bundle(&services.randomness.handle_info())?;
    let randomness = inputs
        .par_iter()
        .enumerate()
        .map(|(i, c)| match spec.mode {
            Mode::Star => star_randomness(&c.x, &pk, &mut client_rng(spec.seed, i, 1), |req| {
                Ok(services.randomness.handle_evaluate(req, pk.epoch)?.to_vec())
            }),
            Mode::Starlite => lite_randomness(&c.x, &spec.campaign),
        })
        .collect::<Result<Vec<_>>>()?;
    times.randomness = t.elapsed();
    // clients keep their randomness across the key change
    services.randomness.rotate_epoch()?;

    let t = Instant::now();
    let relay_cfg = services.relay.config();
    let relay = (spec.transport == Transport::Relay).then_some(&relay_cfg);
    let (subs, sizes) = build_all(spec, &inputs, &randomness, pk.epoch, relay)?;
    times.message = t.elapsed();

    let t = Instant::now();
    subs.par_iter().try_for_each(|s| services.submit(s))?;
    times.submission = t.elapsed();

    let closed = services.aggregation.close_epoch()?;
    let result = services.aggregation.run_epoch_aggregation(closed)?;
    times.aggregation = result.elapsed;

    let expected = ExpectedReport::count(&inputs, spec.campaign.threshold, &spec.campaign.policy());
    finish(spec, false, times, sizes, result.jsonl.to_vec(), expected)
}

/// Where the three HTTP services live.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Endpoints {
    pub randomness: String,
    pub aggregation: String,
    pub relay: String,
}

/// Services bound to loopback ports on the current runtime.
#[derive(Debug)]
pub struct LocalServers {
    pub services: LocalServices,
    pub endpoints: Endpoints,
    handles: Vec<ServerHandle>,
}

impl LocalServers {
    pub async fn start(campaign: &CampaignConfig, verbose: bool) -> Result<Self> {
        let services = LocalServices::new(campaign, verbose)?;
        let randomness = http::spawn_local(http::randomness_router(services.randomness.clone())).await?;
        let aggregation = http::spawn_local(http::aggregation_router(services.aggregation.clone())).await?;
        let relay = http::spawn_local(http::relay_router(http::RelayState::new(
            services.relay.clone(),
            aggregation.url(),
        )))
        .await?;
        let endpoints = Endpoints {
            randomness: randomness.url(),
            aggregation: aggregation.url(),
            relay: relay.url(),
        };
        Ok(LocalServers {
            services,
            endpoints,
            handles: vec![randomness, aggregation, relay],
        })
    }

    pub async fn shutdown(self) {
        for h in self.handles {
            h.shutdown().await;
        }
    }
}

fn upstream(e: reqwest::Error) -> StarError {
    StarError::Upstream(e.to_string())
}

async fn expect_ok(resp: reqwest::Response) -> Result<Vec<u8>> {
    let status = resp.status();
    let body = resp.bytes().await.map_err(upstream)?.to_vec();
    if status.is_success() {
        Ok(body)
    } else {
        Err(StarError::Upstream(format!(
            "status {status}: {}",
            String::from_utf8_lossy(&body)
        )))
    }
}

/// HTTP client for the three services.
#[derive(Clone, Debug)]
pub struct NetworkClient {
    pub endpoints: Endpoints,
    http: reqwest::Client,
}

impl NetworkClient {
    pub fn new(endpoints: Endpoints) -> Self {
        NetworkClient {
            endpoints,
            http: reqwest::Client::new(),
        }
    }

    async fn get(&self, url: String) -> Result<Vec<u8>> {
        expect_ok(self.http.get(url).send().await.map_err(upstream)?).await
    }

    async fn post(&self, url: String, body: Vec<u8>) -> Result<Vec<u8>> {
        expect_ok(self.http.post(url).body(body).send().await.map_err(upstream)?).await
    }

    pub async fn campaign(&self) -> Result<CampaignConfig> {
        Ok(serde_json::from_slice(&self.get(format!("{}/config", self.endpoints.aggregation)).await?)?)
    }

    pub async fn public_key(&self) -> Result<PublicKey> {
        Ok(PublicKey::from_bundle(
            &self.get(format!("{}/info", self.endpoints.randomness)).await?,
        )?)
    }

    pub async fn relay_config(&self) -> Result<RelayKeyConfig> {
        RelayKeyConfig::from_bytes(&self.get(format!("{}/relay-config", self.endpoints.relay)).await?)
    }

    pub async fn evaluate(&self, request: &[u8; REQUEST_LEN], epoch: u64) -> Result<Vec<u8>> {
        let resp = self
            .http
            .post(format!("{}/evaluate", self.endpoints.randomness))
            .header(EPOCH_HEADER, epoch.to_string())
            .body(request.to_vec())
            .send()
            .await
            .map_err(upstream)?;
        expect_ok(resp).await
    }

    pub async fn rotate_randomness(&self) -> Result<u64> {
        let body = self.post(format!("{}/rotate", self.endpoints.randomness), Vec::new()).await?;
        String::from_utf8_lossy(&body)
            .trim()
            .parse()
            .map_err(|_| StarError::Upstream("bad rotate reply".into()))
    }

    pub async fn submit(&self, sub: &Submission) -> Result<()> {
        match &sub.capsule {
            None => self.post(format!("{}/submit", self.endpoints.aggregation), sub.message.clone()).await?,
            Some(c) => self.post(format!("{}/relay", self.endpoints.relay), c.clone()).await?,
        };
        Ok(())
    }

    pub async fn close_epoch(&self) -> Result<u64> {
        let body = self.post(format!("{}/close-epoch", self.endpoints.aggregation), Vec::new()).await?;
        String::from_utf8_lossy(&body)
            .trim()
            .parse()
            .map_err(|_| StarError::Upstream("bad close-epoch reply".into()))
    }

    pub async fn report(&self, epoch: u64) -> Result<Vec<u8>> {
        self.get(format!("{}/report/{epoch}", self.endpoints.aggregation)).await
    }
}

const NETWORK_WORKERS: usize = 16;

/// Runs `job` over `0..n` on a few concurrent tasks, keeping index order.
async fn concurrently<T, F, Fut>(n: usize, job: F) -> Result<Vec<T>>
where
    T: Send + 'static,
    F: Fn(usize) -> Fut + Send + Sync + 'static,
    Fut: std::future::Future<Output = Result<T>> + Send,
{
    let job = Arc::new(job);
    let chunk = n.div_ceil(NETWORK_WORKERS).max(1);
    let mut tasks = Vec::new();
    for start in (0..n).step_by(chunk) {
        let job = job.clone();
        tasks.push(tokio::spawn(async move {
            let mut out = Vec::new();
            for i in start..(start + chunk).min(n) {
                out.push(job(i).await?);
            }
            Ok::<_, StarError>(out)
        }));
    }
    let mut all = Vec::with_capacity(n);
    for t in tasks {
        all.extend(t.await.map_err(|e| StarError::Upstream(e.to_string()))??);
    }
    Ok(all)
}

/// Runs a campaign against running services over HTTP.
pub async fn run_simulation_network(spec: &SimulationSpec, endpoints: &Endpoints) -> Result<Simulation> {
    let client = NetworkClient::new(endpoints.clone());
    let served = client.campaign().await?;
    if served != spec.campaign {
        return Err(StarError::Config("served campaign differs from the simulation's".into()));
    }
    let mut times = PhaseTimes::default();

    let t = Instant::now();
    let inputs = Arc::new(sample_clients(spec));
    times.sampling = t.elapsed();

    let t = Instant::now();
    let pk = client.public_key().await?;
    let randomness = match spec.mode {
        Mode::Star => {
            let (client, inputs, seed) = (client.clone(), inputs.clone(), spec.seed);
            concurrently(inputs.len(), move |i| {
                let (client, inputs) = (client.clone(), inputs.clone());
                async move {
                    let mut rng = client_rng(seed, i, 1);
                    let (request, state) = blind(&inputs[i].x, &mut rng)?;
                    let response = client.evaluate(request.as_bytes(), pk.epoch).await?;
                    let output = finalize(&pk, &Evaluation::from_bytes(&response)?, &state)?;
                    Ok(split_randomness(&output)?)
                }
            })
            .await?
        }
        Mode::Starlite => inputs
            .par_iter()
            .map(|c| lite_randomness(&c.x, &spec.campaign))
            .collect::<Result<Vec<_>>>()?,
    };
    times.randomness = t.elapsed();
    client.rotate_randomness().await?;

    let t = Instant::now();
    let relay_cfg = match spec.transport {
        Transport::Relay => Some(client.relay_config().await?),
        Transport::Direct => None,
    };
    let (subs, sizes) = build_all(spec, &inputs, &randomness, pk.epoch, relay_cfg.as_ref())?;
    times.message = t.elapsed();

    let t = Instant::now();
    let subs = Arc::new(subs);
    {
        let (client, subs) = (client.clone(), subs.clone());
        concurrently(subs.len(), move |i| {
            let (client, subs) = (client.clone(), subs.clone());
            async move { client.submit(&subs[i]).await }
        })
        .await?;
    }
    times.submission = t.elapsed();

    let t = Instant::now();
    let closed = client.close_epoch().await?;
    let jsonl = client.report(closed).await?;
    times.aggregation = t.elapsed();

    let expected = ExpectedReport::count(&inputs, spec.campaign.threshold, &spec.campaign.policy());
    finish(spec, true, times, sizes, jsonl, expected)
}

/// Starts loopback services, runs the campaign over HTTP and stops them.
pub fn run_simulation_loopback(spec: &SimulationSpec) -> Result<Simulation> {
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let servers = LocalServers::start(&spec.campaign, spec.verbose).await?;
        let result = run_simulation_network(spec, &servers.endpoints).await;
        servers.shutdown().await;
        result
    })
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Messages from `n` Zipf-sampled clients, built with local randomness.
///
/// Clients with the same measurement share a [`MessageTemplate`], so the
/// cost is dominated by share evaluation and encryption, not hashing.
pub fn generate_messages(
    n: usize,
    threshold: usize,
    field: FieldId,
    seed: u64,
    epoch: u64,
) -> Result<(Vec<StarMessage>, Vec<ClientInput>)> {
    let policy = PayloadPolicy::default();
    let mut sampler = ZipfSampler::new(DEFAULT_SUPPORT, DEFAULT_EXPONENT, seed);
    let ranks = sample_ranks(n, &mut sampler);
    let mut distinct: Vec<usize> = ranks.clone();
    distinct.sort_unstable();
    distinct.dedup();
    let campaign = CampaignConfig {
        threshold,
        field,
        ..Default::default()
    };
    let templates: BTreeMap<usize, MessageTemplate> = distinct
        .par_iter()
        .map(|&rank| {
            let x = measurement_for_rank(rank);
            let r = lite_randomness(&x, &campaign)?;
            Ok((rank, MessageTemplate::new(&x, &r, threshold, &policy, field, epoch)?))
        })
        .collect::<Result<_>>()?;
    const CHUNK: usize = 4096;
    let messages: Vec<StarMessage> = ranks
        .par_chunks(CHUNK)
        .enumerate()
        .flat_map_iter(|(c, chunk)| {
            let mut rng = client_rng(seed, c, 3);
            chunk
                .iter()
                .map(|rank| templates[rank].build(b"", &mut rng))
                .collect::<Vec<_>>()
        })
        .collect();
    let inputs = ranks
        .iter()
        .map(|&rank| ClientInput {
            x: measurement_for_rank(rank).to_vec(),
            aux: Vec::new(),
        })
        .collect();
    Ok((messages, inputs))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AggregateBench {
    pub messages: usize,
    pub threshold: usize,
    pub field: String,
    pub repetitions: usize,
    pub median_secs: f64,
    pub min_secs: f64,
    pub max_secs: f64,
    pub generation_secs: f64,
    pub revealed_measurements: u64,
    pub oracle_match: bool,
}

/// Times aggregation alone over pre-built messages, `repetitions` times.
pub fn bench_aggregate(
    n: usize,
    threshold: usize,
    field: FieldId,
    repetitions: usize,
    seed: u64,
) -> Result<AggregateBench> {
    let t = Instant::now();
    let (messages, inputs) = generate_messages(n, threshold, field, seed, 0)?;
    let generation_secs = t.elapsed().as_secs_f64();
    let expected = ExpectedReport::count(&inputs, threshold, &PayloadPolicy::default());
    drop(inputs);
    let config = star_core::aggregate::AggregationConfig::new(threshold, field, 0);
    let mut secs = Vec::new();
    let mut last = None;
    for _ in 0..repetitions.max(1) {
        let t = Instant::now();
        let report = aggregate_parallel(&messages, &config)?;
        secs.push(t.elapsed().as_secs_f64());
        last = Some(report);
    }
    let report = last.expect("at least one repetition");
    let parsed = parse_jsonl(&render_jsonl(&report, 1, false))?;
    let oracle_match = expected.diff(&parsed).is_empty();
    let (min_secs, max_secs) = secs
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &s| (lo.min(s), hi.max(s)));
    Ok(AggregateBench {
        messages: n,
        threshold,
        field: field.to_string(),
        repetitions: secs.len(),
        median_secs: median(&mut secs),
        min_secs,
        max_secs,
        generation_secs,
        revealed_measurements: report.revealed.len() as u64,
        oracle_match,
    })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ClientBench {
    pub samples: usize,
    pub field: String,
    pub blind_median_ms: f64,
    pub finalize_median_ms: f64,
    pub message_median_ms: f64,
    /// Blind, finalize and message build together; server time excluded.
    pub client_median_ms: f64,
    pub evaluations: usize,
    pub evaluation_repetitions: usize,
    pub evaluations_per_sec_median: f64,
}

/// Per-client cost of the star path, and the evaluator's single-thread throughput.
pub fn bench_client(
    campaign: &CampaignConfig,
    samples: usize,
    evaluations: usize,
    repetitions: usize,
    seed: u64,
) -> Result<ClientBench> {
    let svc = RandomnessService::new(RandomnessOptions::default())?;
    let pk = PublicKey::from_bundle(&svc.handle_info())?;
    let policy = campaign.policy();
    let aux = vec![0u8; campaign.aux_fixed_len];
    let (mut blind_ms, mut finalize_ms, mut message_ms, mut total_ms) = (vec![], vec![], vec![], vec![]);
    for i in 0..samples.max(1) {
        let mut rng = client_rng(seed, i, 4);
        let x = measurement_for_rank(i + 1);
        let t0 = Instant::now();
        let (request, state) = blind(&x, &mut rng)?;
        let blinded = t0.elapsed();
        let response = svc.handle_evaluate(request.as_bytes(), pk.epoch)?;
        let t1 = Instant::now();
        let output = finalize(&pk, &Evaluation::from_bytes(&response)?, &state)?;
        let r = split_randomness(&output)?;
        let finalized = t1.elapsed();
        let t2 = Instant::now();
        let msg = build_message(&x, &aux, &r, campaign.threshold, &policy, campaign.field, pk.epoch, &mut rng)?;
        std::hint::black_box(msg.to_bytes());
        let built = t2.elapsed();
        let ms = |d: Duration| d.as_secs_f64() * 1e3;
        blind_ms.push(ms(blinded));
        finalize_ms.push(ms(finalized));
        message_ms.push(ms(built));
        total_ms.push(ms(blinded + finalized + built));
    }
    let requests: Vec<_> = (0..evaluations.max(1))
        .map(|i| {
            let mut rng = client_rng(seed, i, 5);
            blind(&measurement_for_rank(i + 1), &mut rng).map(|(r, _)| r)
        })
        .collect::<Result<_, _>>()?;
    let mut rates = Vec::new();
    for _ in 0..repetitions.max(1) {
        let t = Instant::now();
        for r in &requests {
            std::hint::black_box(svc.handle_evaluate(r.as_bytes(), pk.epoch)?);
        }
        rates.push(requests.len() as f64 / t.elapsed().as_secs_f64());
    }
    Ok(ClientBench {
        samples: total_ms.len(),
        field: campaign.field.to_string(),
        blind_median_ms: median(&mut blind_ms),
        finalize_median_ms: median(&mut finalize_ms),
        message_median_ms: median(&mut message_ms),
        client_median_ms: median(&mut total_ms),
        evaluations: requests.len(),
        evaluation_repetitions: rates.len(),
        evaluations_per_sec_median: median(&mut rates),
    })
}

/// Writes rows as CSV with a header line.
pub fn write_csv<T: Serialize, W: std::io::Write>(rows: &[T], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row).map_err(|e| StarError::Config(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}
