//! Checkpoint directory layout:
//!
//! ```text
//! MANIFEST            key = value lines: counters, thresholds, rng and data positions, members
//! config.toml         the resolved run configuration
//! generators.genome   genome text records, in population order
//! discriminators.genome
//! params/<id>.bin     parameters and Adam state of one individual, little-endian
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::backend::{AdamState, ParamEntry, ParamKey, ParamStore, ShapeSignature};
use crate::coevolution::{EvolutionState, Individual, Population, Streams};
use crate::error::{Error, Result};
use crate::gan::NoiseSource;
use crate::genome::{
    infer_shapes, parse_genome, write_genome, Genome, InnovationCounter, InnovationId,
    LayerSource, Role, Shape,
};
use crate::rng::RngState;
use crate::variation::SpeciationState;

use super::RunConfig;

pub const CHECKPOINT_FORMAT: &str = "coegan.checkpoint/1";
const PARAMS_MAGIC: &[u8; 8] = b"COEGANP1";

fn fail(path: &Path, message: impl Into<String>) -> Error {
    Error::Checkpoint {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn key_bytes(key: &ParamKey) -> (u8, u64) {
    match key {
        LayerSource::Gene(id) => (0, *id),
        LayerSource::InputProjection => (1, 0),
        LayerSource::OutputAdapter => (2, 0),
    }
}

fn key_from(tag: u8, id: u64) -> Option<ParamKey> {
    match tag {
        0 => Some(LayerSource::Gene(id)),
        1 => Some(LayerSource::InputProjection),
        2 => Some(LayerSource::OutputAdapter),
        _ => None,
    }
}

pub fn encode_params(store: &ParamStore<f32>) -> Vec<u8> {
    let mut out = PARAMS_MAGIC.to_vec();
    out.extend((store.len() as u32).to_le_bytes());
    for (key, entry) in store.iter() {
        let (tag, id) = key_bytes(key);
        out.push(tag);
        out.extend(id.to_le_bytes());
        out.extend(entry.adam.step.to_le_bytes());
        out.extend((entry.weights.len() as u32).to_le_bytes());
        out.extend((entry.bias.len() as u32).to_le_bytes());
        for tensor in [
            &entry.weights,
            &entry.bias,
            &entry.adam.m_weights,
            &entry.adam.v_weights,
            &entry.adam.m_bias,
            &entry.adam.v_bias,
        ] {
            for v in tensor.iter() {
                out.extend(v.to_le_bytes());
            }
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    offset: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let slice = self.bytes.get(self.offset..self.offset + n).ok_or(Error::Format {
            offset: self.offset as u64,
            message: "truncated parameter file".into(),
        })?;
        self.offset += n;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn floats(&mut self, n: usize) -> Result<Vec<f32>> {
        Ok(self
            .take(4 * n)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect())
    }
}

/// Decodes a parameter file; signatures come from the shape plan of the owning genome.
pub fn decode_params(bytes: &[u8], signatures: &BTreeMap<ParamKey, ShapeSignature>) -> Result<ParamStore<f32>> {
    let mut cursor = Cursor { bytes, offset: 0 };
    if cursor.take(8)? != PARAMS_MAGIC {
        return Err(Error::Format {
            offset: 0,
            message: "not a parameter file".into(),
        });
    }
    let count = cursor.u32()?;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let at = cursor.offset as u64;
        let tag = cursor.take(1)?[0];
        let id = cursor.u64()?;
        let key = key_from(tag, id).ok_or(Error::Format {
            offset: at,
            message: format!("unknown layer tag {tag}"),
        })?;
        let signature = *signatures.get(&key).ok_or(Error::Format {
            offset: at,
            message: format!("layer {key:?} is not part of the genome"),
        })?;
        let step = cursor.u64()?;
        let w = cursor.u32()? as usize;
        let b = cursor.u32()? as usize;
        let entry = ParamEntry {
            signature,
            weights: cursor.floats(w)?,
            bias: cursor.floats(b)?,
            adam: AdamState {
                m_weights: cursor.floats(w)?,
                v_weights: cursor.floats(w)?,
                m_bias: cursor.floats(b)?,
                v_bias: cursor.floats(b)?,
                step,
            },
        };
        store.insert(key, entry)?;
    }
    if cursor.offset != bytes.len() {
        return Err(Error::Format {
            offset: cursor.offset as u64,
            message: "trailing bytes in parameter file".into(),
        });
    }
    Ok(store)
}

fn population_file(role: Role) -> &'static str {
    match role {
        Role::Generator => "generators.genome",
        Role::Discriminator => "discriminators.genome",
    }
}

fn encode_reuse(reuse: &BTreeMap<InnovationId, u32>) -> String {
    reuse
        .iter()
        .map(|(id, n)| format!("{id}:{n}"))
        .collect::<Vec<_>>()
        .join(",")
}

fn decode_reuse(text: &str) -> Option<BTreeMap<InnovationId, u32>> {
    if text.is_empty() {
        return Some(BTreeMap::new());
    }
    text.split(',')
        .map(|pair| {
            let (id, n) = pair.split_once(':')?;
            Some((id.parse().ok()?, n.parse().ok()?))
        })
        .collect()
}

/// Writes `state` to `dir`, replacing any previous checkpoint there atomically.
pub fn write_checkpoint(state: &EvolutionState, config: &RunConfig, data_state: &str, dir: &Path) -> Result<()> {
    let staging = staging_path(dir);
    if staging.exists() {
        fs::remove_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;
    }
    let params_dir = staging.join("params");
    fs::create_dir_all(&params_dir).map_err(|e| Error::io(&params_dir, e))?;

    let mut manifest = String::new();
    let mut line = |k: &str, v: String| manifest.push_str(&format!("{k} = {v}\n"));
    line("format", CHECKPOINT_FORMAT.to_string());
    line("generation", state.generation.to_string());
    line("next_id", state.next_id.to_string());
    line("next_innovation", state.innovations.peek().to_string());
    line(
        "prev_best",
        match state.prev_best {
            Some((g, d)) => format!("{g},{d}"),
            None => "none".into(),
        },
    );
    line("generator_threshold", format!("{:016x}", state.generators.speciation.threshold.to_bits()));
    line(
        "discriminator_threshold",
        format!("{:016x}", state.discriminators.speciation.threshold.to_bits()),
    );
    let streams = &state.streams;
    line("rng.evolution", RngState::capture(&streams.evolution).encode());
    line("rng.pairing", RngState::capture(&streams.pairing).encode());
    line("rng.init", RngState::capture(&streams.init).encode());
    line("rng.eval", RngState::capture(&streams.eval).encode());
    line("rng.noise", RngState::capture(&streams.noise.rng).encode());
    line("data", data_state.to_string());
    for population in [&state.generators, &state.discriminators] {
        let mut genomes = String::new();
        for m in &population.members {
            line(
                "member",
                format!("{} {} {}", population.role.name(), m.id, encode_reuse(&m.gene_reuse)),
            );
            genomes.push_str(&write_genome(&m.genome));
            write(&params_dir.join(format!("{}.bin", m.id)), encode_params(m.network.params()))?;
        }
        write(&staging.join(population_file(population.role)), genomes)?;
    }
    write(&staging.join("MANIFEST"), manifest)?;
    write(&staging.join("config.toml"), config.to_toml())?;

    if dir.exists() {
        fs::remove_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::rename(&staging, dir).map_err(|e| Error::io(dir, e))
}

fn staging_path(dir: &Path) -> PathBuf {
    let mut name = dir.file_name().unwrap_or_default().to_os_string();
    name.push(".tmp");
    dir.with_file_name(name)
}

pub fn read_checkpoint_config(dir: &Path) -> Result<RunConfig> {
    let path = dir.join("config.toml");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    RunConfig::from_toml(&text)
}

/// Restores the evolution state and the data-source position saved in `dir`.
pub fn load_checkpoint(dir: &Path, config: &RunConfig, sample_shape: Shape) -> Result<(EvolutionState, String)> {
    let manifest_path = dir.join("MANIFEST");
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let bad = |m: String| fail(&manifest_path, m);
    let mut fields: BTreeMap<&str, &str> = BTreeMap::new();
    let mut members: Vec<(Role, u64, BTreeMap<InnovationId, u32>)> = Vec::new();
    for raw in text.lines() {
        let (k, v) = raw
            .split_once(" = ")
            .ok_or_else(|| bad(format!("malformed line `{raw}`")))?;
        if k == "member" {
            let mut parts = v.splitn(3, ' ');
            let parsed = (|| {
                let role = Role::from_name(parts.next()?)?;
                let id = parts.next()?.parse().ok()?;
                let reuse = decode_reuse(parts.next().unwrap_or(""))?;
                Some((role, id, reuse))
            })();
            members.push(parsed.ok_or_else(|| bad(format!("malformed member `{v}`")))?);
        } else {
            fields.insert(k, v);
        }
    }
    let get = |k: &str| fields.get(k).copied().ok_or_else(|| bad(format!("missing `{k}`")));
    if get("format")? != CHECKPOINT_FORMAT {
        return Err(bad(format!("unsupported format `{}`", get("format")?)));
    }
    let number = |k: &str| -> Result<u64> { get(k)?.parse().map_err(|_| bad(format!("bad `{k}`"))) };
    let threshold = |k: &str| -> Result<f64> {
        u64::from_str_radix(get(k)?, 16)
            .map(f64::from_bits)
            .map_err(|_| bad(format!("bad `{k}`")))
    };
    let rng = |k: &str| -> Result<_> {
        RngState::decode(get(k)?)
            .map(|s| s.restore())
            .ok_or_else(|| bad(format!("bad `{k}`")))
    };
    let prev_best = match get("prev_best")? {
        "none" => None,
        pair => {
            let parsed = pair
                .split_once(',')
                .and_then(|(g, d)| Some((g.parse().ok()?, d.parse().ok()?)));
            Some(parsed.ok_or_else(|| bad("bad `prev_best`".into()))?)
        }
    };

    let mut populations = Vec::new();
    for (role, threshold_key) in [
        (Role::Generator, "generator_threshold"),
        (Role::Discriminator, "discriminator_threshold"),
    ] {
        let genome_path = dir.join(population_file(role));
        let genome_text = fs::read_to_string(&genome_path).map_err(|e| Error::io(&genome_path, e))?;
        let mut lines = genome_text.lines();
        let mut restored = Vec::new();
        for (_, id, reuse) in members.iter().filter(|m| m.0 == role) {
            let genome: Genome = parse_genome(&mut lines).map_err(|m| fail(&genome_path, m))?;
            if genome.role != role {
                return Err(fail(&genome_path, format!("individual {id} is not a {}", role.name())));
            }
            let plan = infer_shapes(&genome, sample_shape, config.noise_dim)?;
            let signatures = plan.layers.iter().map(|l| (l.source, ShapeSignature::of(l))).collect();
            let params_path = dir.join("params").join(format!("{id}.bin"));
            let bytes = fs::read(&params_path).map_err(|e| Error::io(&params_path, e))?;
            let store = decode_params(&bytes, &signatures).map_err(|e| match e {
                Error::Format { offset, message } => Error::Format {
                    offset,
                    message: format!("{}: {message}", params_path.display()),
                },
                other => other,
            })?;
            restored.push(Individual::restore(
                *id,
                genome,
                &store,
                reuse.clone(),
                sample_shape,
                config.noise_dim,
            )?);
        }
        populations.push(Population {
            role,
            members: restored,
            speciation: SpeciationState {
                threshold: threshold(threshold_key)?,
                ..SpeciationState::new(config.species)
            },
        });
    }
    let discriminators = populations.pop().expect("two populations");
    let generators = populations.pop().expect("two populations");

    let state = EvolutionState {
        generation: number("generation")? as usize,
        generators,
        discriminators,
        innovations: InnovationCounter::new(number("next_innovation")?),
        next_id: number("next_id")?,
        prev_best,
        streams: Streams {
            evolution: rng("rng.evolution")?,
            pairing: rng("rng.pairing")?,
            init: rng("rng.init")?,
            eval: rng("rng.eval")?,
            noise: NoiseSource::new(config.noise_dim, rng("rng.noise")?),
        },
    };
    Ok((state, get("data")?.to_string()))
}
