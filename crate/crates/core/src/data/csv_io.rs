//! Dataset CSV: one row per (scene, agent, step) with header
//! `scene_id,agent_id,category,t,x,y`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::scene::Scene;
use crate::error::{Error, Result};

pub const HEADER: [&str; 6] = ["scene_id", "agent_id", "category", "t", "x", "y"];

#[derive(Debug, Deserialize, Serialize)]
struct Row {
    scene_id: String,
    agent_id: u64,
    category: usize,
    t: usize,
    x: f64,
    y: f64,
}

#[derive(Default)]
struct AgentRows {
    category: Option<usize>,
    points: BTreeMap<usize, [f64; 2]>,
}

fn malformed(e: csv::Error) -> Error {
    Error::MalformedData(format!("csv: {e}"))
}

pub fn read_scenes<R: Read>(reader: R, num_categories: usize) -> Result<Vec<Scene>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(malformed)?.clone();
    if header.iter().ne(HEADER.iter().copied()) {
        return Err(Error::MalformedData(format!(
            "expected header `{}`, got `{}`",
            HEADER.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    // Scenes keep first-appearance order; agents sort by id.
    let mut order: Vec<String> = Vec::new();
    let mut grouped: BTreeMap<String, BTreeMap<u64, AgentRows>> = BTreeMap::new();
    for row in rdr.deserialize::<Row>() {
        let row = row.map_err(malformed)?;
        if row.category >= num_categories {
            return Err(Error::Config(format!(
                "scene {} agent {}: category {} outside [0, {num_categories})",
                row.scene_id, row.agent_id, row.category
            )));
        }
        if !grouped.contains_key(&row.scene_id) {
            order.push(row.scene_id.clone());
        }
        let agent = grouped.entry(row.scene_id.clone()).or_default().entry(row.agent_id).or_default();
        match agent.category {
            Some(c) if c != row.category => {
                return Err(Error::MalformedData(format!(
                    "scene {} agent {} changes category",
                    row.scene_id, row.agent_id
                )))
            }
            _ => agent.category = Some(row.category),
        }
        if agent.points.insert(row.t, [row.x, row.y]).is_some() {
            return Err(Error::MalformedData(format!(
                "scene {} agent {} repeats step {}",
                row.scene_id, row.agent_id, row.t
            )));
        }
    }

    let mut scenes = Vec::with_capacity(order.len());
    for id in order {
        let agents = &grouped[&id];
        let steps = agents.values().map(|a| a.points.keys().max().map_or(0, |m| m + 1)).max().unwrap_or(0);
        let mut categories = Vec::with_capacity(agents.len());
        let mut positions = Vec::with_capacity(agents.len() * steps * 2);
        for (agent_id, a) in agents {
            for t in 0..steps {
                let p = a.points.get(&t).ok_or_else(|| {
                    Error::MalformedData(format!("scene {id} agent {agent_id} is missing step {t}"))
                })?;
                positions.extend_from_slice(p);
            }
            categories.push(a.category.expect("agent has rows"));
        }
        scenes.push(Scene::new(id, categories, steps, positions)?);
    }
    Ok(scenes)
}

pub fn write_scenes<W: Write>(writer: W, scenes: &[Scene]) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    let io = |e: csv::Error| Error::MalformedData(format!("csv write: {e}"));
    wtr.write_record(HEADER).map_err(io)?;
    for s in scenes {
        for i in 0..s.num_agents() {
            for t in 0..s.steps() {
                let p = s.position(i, t);
                wtr.write_record([
                    s.scene_id.clone(),
                    i.to_string(),
                    s.categories[i].to_string(),
                    t.to_string(),
                    format!("{:.16e}", p[0]),
                    format!("{:.16e}", p[1]),
                ])
                .map_err(io)?;
            }
        }
    }
    wtr.flush().map_err(|e| Error::MalformedData(format!("csv write: {e}")))?;
    Ok(())
}

pub fn load_csv(path: impl AsRef<Path>, num_categories: usize) -> Result<Vec<Scene>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_scenes(file, num_categories)
}

pub fn save_csv(scenes: &[Scene], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_scenes(std::io::BufWriter::new(file), scenes)
}
