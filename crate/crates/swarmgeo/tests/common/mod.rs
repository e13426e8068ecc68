//! Shared fixtures for integration tests: a tiny three-city gazetteer
//! and rosters of scripted simulated agents.
#![allow(dead_code)]

use std::sync::Arc;

use swarmgeo::agents::{
    AgentBackend, AgentId, AgentProfile, ImageRef, Roster, SimWorld, SimulatedAgent,
};
use swarmgeo::geo::{GazetteerEntry, GeoBox, GeoPoint};

pub fn gazetteer() -> Vec<GazetteerEntry> {
    let mk = |name: &str, lat: f64, lon: f64| {
        GazetteerEntry::new(
            name,
            vec![name.to_lowercase()],
            GeoBox::point(GeoPoint::new(lat, lon).unwrap()),
        )
        .unwrap()
    };
    vec![
        mk("Alpha", 0.0, 0.0),
        mk("Beta", 25.0, 25.0),
        mk("Gamma", -40.0, -60.0),
    ]
}

pub fn world() -> Arc<SimWorld> {
    Arc::new(SimWorld::from_gazetteer(gazetteer(), 50.0, 0.15))
}

/// An agent that always answers its home truth on Alpha-region images.
pub fn truth_teller(persuadability: f64, seed: u64) -> AgentProfile {
    AgentProfile {
        home_regions: vec!["r-alpha".into()],
        home_accuracy: 1.0,
        away_accuracy: 1.0,
        seed,
        persuadability,
    }
}

/// An agent that always answers a decoy on Alpha-region images.
pub fn decoy_teller(persuadability: f64, seed: u64) -> AgentProfile {
    AgentProfile {
        home_regions: vec![],
        home_accuracy: 0.0,
        away_accuracy: 0.0,
        seed,
        persuadability,
    }
}

pub fn sim_roster(world: Arc<SimWorld>, profiles: Vec<AgentProfile>) -> Roster {
    let agents: Vec<Box<dyn AgentBackend>> = profiles
        .into_iter()
        .enumerate()
        .map(|(i, p)| {
            Box::new(
                SimulatedAgent::new(
                    AgentId {
                        index: i,
                        name: format!("agent-{i}"),
                    },
                    p,
                    world.clone(),
                )
                .unwrap(),
            ) as Box<dyn AgentBackend>
        })
        .collect();
    Roster::new(agents).unwrap()
}

pub fn alpha_image(id: &str) -> ImageRef {
    ImageRef {
        id: id.into(),
        content_seed: 4242,
        region_key: "r-alpha".into(),
        truth_text: "Alpha".into(),
    }
}
