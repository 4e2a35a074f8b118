use rand_distr::{Distribution, Normal};
use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

use super::SoupError;
use crate::gnn::ModelParams;
use crate::rng;
use crate::tensor::{kernels, DenseMat, GradTape, Var};

/// Interpolation parameters, one raw scalar per (ingredient, layer).
///
/// Stored layer-major (`L x N`) so that a row softmax normalizes each layer
/// across ingredients. With `simplex` off the raw values are used directly as
/// ratios.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaMatrix {
    raw: DenseMat,
    simplex: bool,
}

impl AlphaMatrix {
    /// All-zero raw values: uniform ratios `1/N` under the softmax.
    pub fn zeros(n: usize, layers: usize, simplex: bool) -> Self {
        Self {
            raw: DenseMat::zeros(layers, n),
            simplex,
        }
    }

    /// Glorot-normal raw values over the `N x L` grid (`fan_in = N`,
    /// `fan_out = L`).
    pub fn glorot(n: usize, layers: usize, seed: u64, simplex: bool) -> Self {
        let std = (2.0 / (n + layers) as f64).sqrt() as f32;
        let normal = Normal::new(0.0f32, std).expect("positive std");
        let mut r = rng::stream(&[seed, 0xa1fa]);
        let mut raw = DenseMat::zeros(layers, n);
        // drawn ingredient-major to match the N x L description
        for i in 0..n {
            for l in 0..layers {
                raw.set(l, i, normal.sample(&mut r));
            }
        }
        Self { raw, simplex }
    }

    /// `values[i][l]` is the raw alpha of ingredient `i` at layer `l`.
    pub fn from_values(values: &[Vec<f32>], simplex: bool) -> Result<Self, SoupError> {
        let n = values.len();
        let layers = values.first().map_or(0, Vec::len);
        if n == 0 || layers == 0 || values.iter().any(|v| v.len() != layers) {
            return Err(SoupError::InvalidConfig(
                "alpha grid must be a non-empty N x L rectangle".into(),
            ));
        }
        let mut raw = DenseMat::zeros(layers, n);
        for (i, row) in values.iter().enumerate() {
            for (l, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(SoupError::InvalidConfig(
                        "alpha values must be finite".into(),
                    ));
                }
                raw.set(l, i, v);
            }
        }
        Ok(Self { raw, simplex })
    }

    pub fn num_ingredients(&self) -> usize {
        self.raw.cols()
    }

    pub fn num_layers(&self) -> usize {
        self.raw.rows()
    }

    pub fn simplex(&self) -> bool {
        self.simplex
    }

    pub fn raw(&self, i: usize, l: usize) -> f32 {
        self.raw.get(l, i)
    }

    /// Layer-major raw storage (`L x N`).
    pub fn raw_matrix(&self) -> &DenseMat {
        &self.raw
    }

    pub(crate) fn raw_matrix_mut(&mut self) -> &mut DenseMat {
        &mut self.raw
    }

    /// Effective ratios, layer-major (`L x N`).
    pub fn ratios(&self) -> DenseMat {
        if self.simplex {
            kernels::row_softmax(&self.raw).expect("finite raw alphas")
        } else {
            self.raw.clone()
        }
    }

    pub fn ratio(&self, i: usize, l: usize) -> f32 {
        self.ratios().get(l, i)
    }

    fn grid(m: &DenseMat) -> Vec<Vec<f32>> {
        (0..m.cols())
            .map(|i| (0..m.rows()).map(|l| m.get(l, i)).collect())
            .collect()
    }
}

impl Serialize for AlphaMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("AlphaMatrix", 3)?;
        st.serialize_field("simplex", &self.simplex)?;
        st.serialize_field("raw", &Self::grid(&self.raw))?;
        st.serialize_field("ratios", &Self::grid(&self.ratios()))?;
        st.end()
    }
}

fn check_shapes(members: &[ModelParams], alphas: &AlphaMatrix) -> Result<(), SoupError> {
    super::check_members(members)?;
    if alphas.num_ingredients() != members.len() || alphas.num_layers() != members[0].num_layers() {
        return Err(SoupError::InvalidConfig(format!(
            "alpha grid is {}x{}, members need {}x{}",
            alphas.num_ingredients(),
            alphas.num_layers(),
            members.len(),
            members[0].num_layers()
        )));
    }
    Ok(())
}

/// Per layer `l`, every parameter group becomes `Σ_i ratio(i, l) · member_i`.
/// Bit-identical to the value [`soup_on_tape`] produces.
pub fn build_soup(members: &[ModelParams], alphas: &AlphaMatrix) -> Result<ModelParams, SoupError> {
    check_shapes(members, alphas)?;
    let ratios = alphas.ratios();
    let first = &members[0];
    let mut layers = Vec::with_capacity(first.num_layers());
    for (l, groups) in first.layers().iter().enumerate() {
        let mut out = Vec::with_capacity(groups.len());
        for (g, shape) in groups.iter().enumerate() {
            let mut acc = DenseMat::zeros(shape.rows(), shape.cols());
            for (i, m) in members.iter().enumerate() {
                acc = kernels::scale_add(&acc, ratios.get(l, i), &m.layers()[l][g])?;
            }
            out.push(acc);
        }
        layers.push(out);
    }
    Ok(ModelParams::new(*first.spec(), layers)?)
}

/// Records the soup construction on `tape`, differentiable with respect to
/// the raw alpha leaf `raw` (an `L x N` variable). Returns the soup's
/// parameter groups in [`ModelParams`] layout.
pub fn soup_on_tape<'a>(
    tape: &mut GradTape<'a>,
    members: &'a [ModelParams],
    raw: Var,
    simplex: bool,
) -> Result<Vec<Vec<Var>>, SoupError> {
    super::check_members(members)?;
    let (layers, n) = tape.value(raw).shape();
    if n != members.len() || layers != members[0].num_layers() {
        return Err(SoupError::InvalidConfig(
            "alpha variable does not match members".into(),
        ));
    }
    let ratios = if simplex { tape.row_softmax(raw)? } else { raw };
    let mut out = Vec::with_capacity(layers);
    for l in 0..layers {
        let picks = (0..n)
            .map(|i| tape.pick(ratios, l, i))
            .collect::<Result<Vec<_>, _>>()?;
        let mut groups = Vec::new();
        for (g, shape) in members[0].layers()[l].iter().enumerate() {
            let mut acc = tape.leaf(DenseMat::zeros(shape.rows(), shape.cols()), false);
            for (i, m) in members.iter().enumerate() {
                let w = tape.constant(&m.layers()[l][g]);
                acc = tape.scale_add(acc, picks[i], w)?;
            }
            groups.push(acc);
        }
        out.push(groups);
    }
    Ok(out)
}
