//! Line-oriented text records for genomes.
//!
//! ```text
//! genome role=generator max_len=6 genes=2
//! gene id=3 kind=linear size=512 activation=leaky_relu
//! gene id=9 kind=transpose_conv size=64 activation=tanh
//! end
//! ```

use std::fmt::Write as _;

use super::{ActivationKind, Gene, GeneKind, Genome, Role};

pub fn write_genome(genome: &Genome) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "genome role={} max_len={} genes={}",
        genome.role.name(),
        genome.max_len,
        genome.genes.len()
    );
    for gene in &genome.genes {
        let _ = writeln!(
            out,
            "gene id={} kind={} size={} activation={}",
            gene.innovation_id,
            gene.kind.name(),
            gene.kind.size(),
            gene.activation.name()
        );
    }
    out.push_str("end\n");
    out
}

fn fields(line: &str, tag: &str) -> Result<Vec<(String, String)>, String> {
    let mut parts = line.split_whitespace();
    if parts.next() != Some(tag) {
        return Err(format!("expected `{tag}` record, got `{line}`"));
    }
    parts
        .map(|p| {
            p.split_once('=')
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .ok_or_else(|| format!("malformed field `{p}`"))
        })
        .collect()
}

fn field<'a>(fields: &'a [(String, String)], key: &str) -> Result<&'a str, String> {
    fields
        .iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v.as_str())
        .ok_or_else(|| format!("missing field `{key}`"))
}

fn number<T: std::str::FromStr>(fields: &[(String, String)], key: &str) -> Result<T, String> {
    let raw = field(fields, key)?;
    raw.parse()
        .map_err(|_| format!("field `{key}` is not a number: `{raw}`"))
}

/// Parses one genome record from the front of `lines`, consuming through its `end` line.
pub fn parse_genome<'a, I>(lines: &mut I) -> Result<Genome, String>
where
    I: Iterator<Item = &'a str>,
{
    let header = lines
        .by_ref()
        .find(|l| !l.trim().is_empty())
        .ok_or("missing genome record")?;
    let head = fields(header, "genome")?;
    let role_name = field(&head, "role")?;
    let role = Role::from_name(role_name).ok_or_else(|| format!("unknown role `{role_name}`"))?;
    let max_len: usize = number(&head, "max_len")?;
    let count: usize = number(&head, "genes")?;
    let mut genes = Vec::with_capacity(count);
    for _ in 0..count {
        let line = lines.next().ok_or("truncated genome record")?;
        let f = fields(line, "gene")?;
        let size: u32 = number(&f, "size")?;
        let kind = match field(&f, "kind")? {
            "linear" => GeneKind::Linear { out_features: size },
            "conv" => GeneKind::Conv { out_channels: size },
            "transpose_conv" => GeneKind::TransposeConv { out_channels: size },
            other => return Err(format!("unknown gene kind `{other}`")),
        };
        let act = field(&f, "activation")?;
        genes.push(Gene {
            innovation_id: number(&f, "id")?,
            kind,
            activation: ActivationKind::from_name(act)
                .ok_or_else(|| format!("unknown activation `{act}`"))?,
        });
    }
    match lines.next().map(str::trim) {
        Some("end") => Ok(Genome {
            role,
            genes,
            max_len,
        }),
        other => Err(format!("expected `end`, got {other:?}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let genome = Genome {
            role: Role::Generator,
            genes: vec![
                Gene {
                    innovation_id: 3,
                    kind: GeneKind::Linear { out_features: 512 },
                    activation: ActivationKind::LeakyReLU,
                },
                Gene {
                    innovation_id: 9,
                    kind: GeneKind::TransposeConv { out_channels: 64 },
                    activation: ActivationKind::Tanh,
                },
            ],
            max_len: 6,
        };
        let text = write_genome(&genome);
        assert_eq!(parse_genome(&mut text.lines()).unwrap(), genome);
    }

    #[test]
    fn rejects_unknown_kind() {
        let text = "genome role=generator max_len=6 genes=1\ngene id=1 kind=pool size=3 activation=relu\nend\n";
        assert!(parse_genome(&mut text.lines()).unwrap_err().contains("pool"));
    }
}
