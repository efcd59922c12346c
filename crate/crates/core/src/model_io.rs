//! Model (de)serialization.
//!
//! Schema: `{version, seed, n, edges: [{from, to, taps: [..]}], noise: {...}}`
//! where an edge `from -> to` fills entry `(to, from)` of the transfer
//! matrix. The noise object is tagged by `kind`:
//!   - `none`:   `{base_variances}`
//!   - `affine`: `{base_variances, latent_variances,
//!                 latents: [{id, children, taps: [[..] per child]}]}`
//!   - `poly`:   `{base_variances, m, p, sigma,
//!                 gains: [{node, monomial_index, taps}]}`

use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::generator::GeneratedModel;
use crate::latent_transform::{CorrelationGraph, LatentExpansion, maximal_cliques};
use crate::netmodel::{
    topology_of, Correlation, GainMatrix, Ldim, NoiseSpec, Topology, TransferFunction,
    TransferMatrix,
};
use crate::poly_lift::{basis_size, correlation_edges_of_spec, PolyCorrelationSpec};

#[derive(Serialize, Deserialize, Debug, Clone)]
pub struct ModelDocument {
    pub version: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub n: usize,
    pub edges: Vec<EdgeDoc>,
    pub noise: NoiseDoc,
}

#[derive(Serialize, Deserialize, Debug, Clone)]
pub struct EdgeDoc {
    pub from: usize,
    pub to: usize,
    pub taps: Vec<f64>,
}

#[derive(Serialize, Deserialize, Debug, Clone)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum NoiseDoc {
    None {
        base_variances: Vec<f64>,
    },
    Affine {
        base_variances: Vec<f64>,
        latent_variances: Vec<f64>,
        latents: Vec<LatentDoc>,
    },
    Poly {
        base_variances: Vec<f64>,
        m: usize,
        p: u32,
        sigma: f64,
        gains: Vec<PolyGainDoc>,
    },
}

#[derive(Serialize, Deserialize, Debug, Clone)]
pub struct LatentDoc {
    pub id: usize,
    pub children: Vec<usize>,
    pub taps: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize, Debug, Clone)]
pub struct PolyGainDoc {
    pub node: usize,
    pub monomial_index: usize,
    pub taps: Vec<f64>,
}

/// Deserialized model plus whichever latent representation it carries.
#[derive(Clone, Debug)]
pub struct ModelBundle {
    pub ldim: Ldim,
    pub expansion: Option<LatentExpansion>,
    pub seed: Option<u64>,
}

impl ModelBundle {
    pub fn topology(&self) -> Topology {
        topology_of(&self.ldim.h().graph())
    }

    /// Correlation graph implied by the noise structure.
    pub fn corr_graph(&self) -> Result<CorrelationGraph> {
        let n = self.ldim.n();
        match &self.ldim.noise().correlation {
            Correlation::None => Ok(CorrelationGraph::new(n)),
            Correlation::Affine(_) => {
                let exp = self
                    .expansion
                    .as_ref()
                    .ok_or_else(|| Error::Invalid("affine bundle lacks its expansion".into()))?;
                let mut gc = CorrelationGraph::new(n);
                for children in exp.latent_children() {
                    for a in 0..children.len() {
                        for b in (a + 1)..children.len() {
                            gc.add_edge(children[a], children[b])?;
                        }
                    }
                }
                Ok(gc)
            }
            Correlation::Poly(spec) => {
                let mut gc = CorrelationGraph::new(n);
                for (a, b) in correlation_edges_of_spec(spec)? {
                    gc.add_edge(a, b)?;
                }
                Ok(gc)
            }
        }
    }

    /// Number of maximal cliques (size >= 2) of the correlation graph.
    pub fn q(&self) -> Result<usize> {
        Ok(maximal_cliques(&self.corr_graph()?)?.q())
    }
}

pub fn to_document(bundle: &ModelBundle) -> ModelDocument {
    let h = bundle.ldim.h();
    let n = h.n();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let tf = h.get(i, j);
            if !tf.is_zero() {
                edges.push(EdgeDoc {
                    from: j,
                    to: i,
                    taps: tf.taps().to_vec(),
                });
            }
        }
    }
    let noise = match &bundle.ldim.noise().correlation {
        Correlation::None => NoiseDoc::None {
            base_variances: bundle.ldim.noise().base_variances.clone(),
        },
        Correlation::Affine(aff) => {
            let exp = bundle
                .expansion
                .as_ref()
                .expect("affine bundle carries its expansion");
            let latents = exp
                .latent_children()
                .iter()
                .enumerate()
                .map(|(l, children)| LatentDoc {
                    id: n + l,
                    children: children.clone(),
                    taps: children
                        .iter()
                        .map(|&c| exp.f().get(c, l).taps().to_vec())
                        .collect(),
                })
                .collect();
            NoiseDoc::Affine {
                base_variances: bundle.ldim.noise().base_variances.clone(),
                latent_variances: aff.latent_variances.clone(),
                latents,
            }
        }
        Correlation::Poly(spec) => {
            let mut gains = Vec::new();
            for k in spec.active_set() {
                for i in 0..n {
                    let tf = spec.gains.get(i, k);
                    if !tf.is_zero() {
                        gains.push(PolyGainDoc {
                            node: i,
                            monomial_index: k,
                            taps: tf.taps().to_vec(),
                        });
                    }
                }
            }
            NoiseDoc::Poly {
                base_variances: bundle.ldim.noise().base_variances.clone(),
                m: spec.m,
                p: spec.p,
                sigma: spec.sigma,
                gains,
            }
        }
    };
    ModelDocument {
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: bundle.seed,
        n,
        edges,
        noise,
    }
}

pub fn from_document(doc: &ModelDocument) -> Result<ModelBundle> {
    let n = doc.n;
    let mut h = TransferMatrix::zero(n);
    for e in &doc.edges {
        if e.from >= n || e.to >= n {
            return Err(Error::Parse(format!(
                "edge ({}, {}) out of bounds for n={n}",
                e.from, e.to
            )));
        }
        h.set(e.to, e.from, TransferFunction::new(e.taps.clone()))?;
    }
    let (noise, expansion) = match &doc.noise {
        NoiseDoc::None { base_variances } => (NoiseSpec::diagonal(base_variances.clone()), None),
        NoiseDoc::Affine {
            base_variances,
            latent_variances,
            latents,
        } => {
            if latents.len() != latent_variances.len() {
                return Err(Error::Parse(
                    "latent count != latent variance count".into(),
                ));
            }
            let mut f = GainMatrix::zero(n, latents.len());
            for (l, latent) in latents.iter().enumerate() {
                if latent.children.len() != latent.taps.len() {
                    return Err(Error::Parse(format!(
                        "latent {} has {} children but {} tap lists",
                        latent.id,
                        latent.children.len(),
                        latent.taps.len()
                    )));
                }
                for (child, taps) in latent.children.iter().zip(&latent.taps) {
                    f.set(*child, l, TransferFunction::new(taps.clone()))?;
                }
            }
            let exp = LatentExpansion::new(
                h.clone(),
                f.clone(),
                base_variances.clone(),
                latent_variances.clone(),
            )?;
            (
                NoiseSpec {
                    base_variances: base_variances.clone(),
                    correlation: Correlation::Affine(crate::netmodel::AffineCorrelation {
                        gains: f,
                        latent_variances: latent_variances.clone(),
                    }),
                },
                Some(exp),
            )
        }
        NoiseDoc::Poly {
            base_variances,
            m,
            p,
            sigma,
            gains,
        } => {
            let cols = basis_size(*m, *p);
            let mut gm = GainMatrix::zero(n, cols as usize);
            for g in gains {
                if g.monomial_index as u128 >= cols {
                    return Err(Error::Parse(format!(
                        "monomial index {} out of range for (m={m}, p={p})",
                        g.monomial_index
                    )));
                }
                gm.set(g.node, g.monomial_index, TransferFunction::new(g.taps.clone()))?;
            }
            let spec = PolyCorrelationSpec::new(*m, *p, *sigma, gm)?;
            (
                NoiseSpec {
                    base_variances: base_variances.clone(),
                    correlation: Correlation::Poly(spec),
                },
                None,
            )
        }
    };
    let ldim = Ldim::new(h, noise)?;
    Ok(ModelBundle {
        ldim,
        expansion,
        seed: doc.seed,
    })
}

pub fn bundle_of(model: &GeneratedModel) -> ModelBundle {
    ModelBundle {
        ldim: model.ldim.clone(),
        expansion: model.expansion.clone(),
        seed: Some(model.seed),
    }
}

pub fn save_model<P: AsRef<Path>>(bundle: &ModelBundle, path: P) -> Result<()> {
    let doc = to_document(bundle);
    let mut file = std::fs::File::create(path)?;
    let json = serde_json::to_string_pretty(&doc)?;
    file.write_all(json.as_bytes())?;
    file.write_all(b"\n")?;
    Ok(())
}

pub fn load_model<P: AsRef<Path>>(path: P) -> Result<ModelBundle> {
    let mut file = std::fs::File::open(path)?;
    let mut buf = String::new();
    file.read_to_string(&mut buf)?;
    let doc: ModelDocument = serde_json::from_str(&buf)?;
    from_document(&doc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::{generate, GeneratorConfig};
    use crate::latent_transform::check_equivalence;

    #[test]
    fn affine_model_roundtrip() {
        let cfg = GeneratorConfig::affine_benchmark(12, 2);
        let model = generate(&cfg, 9).unwrap();
        let bundle = bundle_of(&model);
        let doc = to_document(&bundle);
        let json = serde_json::to_string(&doc).unwrap();
        let back = from_document(&serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(back.ldim.h(), bundle.ldim.h());
        assert_eq!(back.ldim.noise(), bundle.ldim.noise());
        assert_eq!(back.expansion, bundle.expansion);
        assert_eq!(back.topology(), model.topology);
        assert_eq!(back.corr_graph().unwrap(), model.corr_graph);
    }

    #[test]
    fn poly_model_roundtrip_preserves_spectrum() {
        let cfg = GeneratorConfig::poly_benchmark(10);
        let model = generate(&cfg, 3).unwrap();
        let bundle = bundle_of(&model);
        let doc = to_document(&bundle);
        let json = serde_json::to_string(&doc).unwrap();
        let back = from_document(&serde_json::from_str(&json).unwrap()).unwrap();
        let report = check_equivalence(&back.ldim, &bundle.ldim, 8, 1e-12).unwrap();
        assert!(report.equivalent);
        assert_eq!(back.corr_graph().unwrap(), model.corr_graph);
        assert_eq!(back.q().unwrap(), 1);
    }

    #[test]
    fn malformed_documents_rejected() {
        let doc = ModelDocument {
            version: "0".into(),
            seed: None,
            n: 3,
            edges: vec![EdgeDoc {
                from: 5,
                to: 0,
                taps: vec![0.0, 0.5],
            }],
            noise: NoiseDoc::None {
                base_variances: vec![1.0; 3],
            },
        };
        assert!(from_document(&doc).is_err());
    }
}
