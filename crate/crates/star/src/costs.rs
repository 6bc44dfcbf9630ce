//! Static cost model: bytes moved and compute time multiplied by cloud prices.

use serde::{Deserialize, Serialize};

const GIB: f64 = (1u64 << 30) as f64;

/// Prices per hour of compute and per GiB moved in each direction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriceModel {
    pub compute_per_hour: f64,
    pub inbound_per_gib: f64,
    pub outbound_per_gib: f64,
}

impl PriceModel {
    /// c4.8xlarge, February 2022: $1.591/h, $0.09/GB out, $0.02/GB in.
    pub const EC2_2022: PriceModel = PriceModel {
        compute_per_hour: 1.591,
        inbound_per_gib: 0.02,
        outbound_per_gib: 0.09,
    };

    /// The same prices with the transfer directions swapped, which is the
    /// convention the published per-server cost table follows.
    pub const EC2_2022_TABULATED: PriceModel = PriceModel {
        compute_per_hour: 1.591,
        inbound_per_gib: 0.09,
        outbound_per_gib: 0.02,
    };
}

/// Traffic and compute of one server for a whole batch of clients.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ServerLoad {
    pub bytes_in: f64,
    pub bytes_out: f64,
    pub compute_seconds: f64,
}

impl ServerLoad {
    /// Per-client byte counts scaled to `clients`, plus total compute seconds.
    pub fn per_client(clients: u64, bytes_in: u64, bytes_out: u64, compute_seconds: f64) -> Self {
        ServerLoad {
            bytes_in: (clients * bytes_in) as f64,
            bytes_out: (clients * bytes_out) as f64,
            compute_seconds,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CostLine {
    pub comms_in: f64,
    pub comms_out: f64,
    pub computation: f64,
}

impl CostLine {
    pub fn total(&self) -> f64 {
        self.comms_in + self.comms_out + self.computation
    }
}

pub fn cost(load: &ServerLoad, prices: &PriceModel) -> CostLine {
    CostLine {
        comms_in: load.bytes_in / GIB * prices.inbound_per_gib,
        comms_out: load.bytes_out / GIB * prices.outbound_per_gib,
        computation: load.compute_seconds / 3600.0 * prices.compute_per_hour,
    }
}

/// Loads of the three deployed servers.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Deployment {
    pub aggregation: ServerLoad,
    pub randomness: ServerLoad,
    pub relay: ServerLoad,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CostTable {
    pub aggregation: CostLine,
    pub randomness: CostLine,
    pub relay: CostLine,
}

impl CostTable {
    pub fn total(&self) -> f64 {
        self.aggregation.total() + self.randomness.total() + self.relay.total()
    }
}

pub fn report_costs(deployment: &Deployment, prices: &PriceModel) -> CostTable {
    CostTable {
        aggregation: cost(&deployment.aggregation, prices),
        randomness: cost(&deployment.randomness, prices),
        relay: cost(&deployment.relay, prices),
    }
}

/// Published per-client sizes and timings.
///
/// Aggregation receives 464 bytes and spends 0.467 s on 100k clients (20.01 s
/// on 1M); the randomness server takes 32 bytes in, 96 out, 0.828 ms per
/// client; the relay receives 519 bytes, forwards 464 and spends 0.002 ms
/// per client.
pub fn published_deployment(clients: u64) -> Deployment {
    let aggregation_seconds = match clients {
        1_000_000 => 20.01,
        n => 0.467 * n as f64 / 100_000.0,
    };
    Deployment {
        aggregation: ServerLoad::per_client(clients, 464, 0, aggregation_seconds),
        randomness: ServerLoad::per_client(clients, 32, 96, clients as f64 * 0.828e-3),
        relay: ServerLoad::per_client(clients, 519, 464, clients as f64 * 0.002e-3),
    }
}

/// Loads measured by a simulation run, scaled to `clients`.
///
/// Randomness compute uses the whole randomness phase, which in-process
/// also includes the clients' blinding, so it overstates the server's share.
pub fn measured_deployment(bench: &crate::harness::BenchReport, clients: u64) -> Deployment {
    let scale = clients as f64 / bench.clients.max(1) as f64;
    let relayed = bench.relay_visible_bytes_max > 0;
    Deployment {
        aggregation: ServerLoad::per_client(
            clients,
            if relayed { bench.message_bytes_max.div_ceil(3) * 4 } else { bench.message_bytes_max } as u64,
            0,
            bench.aggregation_secs * scale,
        ),
        randomness: ServerLoad::per_client(
            clients,
            bench.randomness_request_bytes as u64,
            bench.randomness_response_bytes as u64,
            if bench.randomness_request_bytes > 0 { bench.randomness_secs * scale } else { 0.0 },
        ),
        relay: if relayed {
            ServerLoad::per_client(
                clients,
                bench.relay_visible_bytes_max as u64,
                bench.message_bytes_max.div_ceil(3) as u64 * 4,
                0.0,
            )
        } else {
            ServerLoad::default()
        },
    }
}
