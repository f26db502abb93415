//! Multiview datasets.
//!
//! Views come from three sources: colorspace splits of RGB images
//! (`L`/`ab`, `Y`/`DbDr`), pairs of patches at a fixed diagonal offset, and
//! synthetic generators whose cross-view mutual information is known in
//! closed form.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// One sample split into named views.
#[derive(Clone, Debug, PartialEq)]
pub struct ViewSet {
    pub sample_id: usize,
    pub views: Vec<(String, Tensor)>,
    pub label: Option<usize>,
}

impl ViewSet {
    pub fn view(&self, name: &str) -> Option<&Tensor> {
        self.views.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }
}

/// Column-major store of a multiview dataset: one `[N × flat_dim]` matrix
/// per view, sharing row order.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    names: Vec<String>,
    shapes: Vec<Vec<usize>>,
    data: Vec<Tensor>,
    sample_ids: Vec<usize>,
    labels: Option<Vec<usize>>,
}

impl Dataset {
    /// Assembles a dataset from per-view matrices whose rows are samples.
    pub fn new(
        names: Vec<String>,
        shapes: Vec<Vec<usize>>,
        data: Vec<Tensor>,
        labels: Option<Vec<usize>>,
    ) -> Result<Self> {
        if names.is_empty() || names.len() != shapes.len() || names.len() != data.len() {
            return Err(Error::Parameter(format!(
                "dataset needs matching view names ({}), shapes ({}) and matrices ({})",
                names.len(),
                shapes.len(),
                data.len()
            )));
        }
        for (i, n) in names.iter().enumerate() {
            if names[..i].contains(n) {
                return Err(Error::Parameter(format!("duplicate view name {n:?}")));
            }
        }
        let n = data[0].rows();
        for ((name, shape), m) in names.iter().zip(&shapes).zip(&data) {
            let flat: usize = shape.iter().product();
            if m.ndim() != 2 || m.rows() != n || m.cols() != flat {
                return Err(crate::error::shape_err(
                    "Dataset::new",
                    format!("view {name:?}: matrix {:?} for {n} samples of shape {shape:?}", m.shape()),
                ));
            }
        }
        if let Some(l) = &labels {
            if l.len() != n {
                return Err(Error::Parameter(format!("{} labels for {n} samples", l.len())));
            }
        }
        Ok(Self {
            names,
            shapes,
            data,
            sample_ids: (0..n).collect(),
            labels,
        })
    }

    /// Checks that every sample carries the same view names and shapes and
    /// that sample ids are unique, then stores the samples column-wise.
    pub fn from_view_sets(samples: &[ViewSet]) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::Parameter("empty dataset".into()))?;
        let names: Vec<String> = first.views.iter().map(|(n, _)| n.clone()).collect();
        let shapes: Vec<Vec<usize>> = first.views.iter().map(|(_, t)| t.shape().to_vec()).collect();
        let mut cols: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
        let has_labels = first.label.is_some();
        let mut labels = Vec::new();
        let mut ids = Vec::with_capacity(samples.len());
        for s in samples {
            if s.views.len() != names.len()
                || s.views
                    .iter()
                    .zip(names.iter().zip(&shapes))
                    .any(|((n, t), (en, es))| n != en || t.shape() != es.as_slice())
            {
                return Err(Error::Parameter(format!(
                    "sample {} does not match the dataset's view names/shapes",
                    s.sample_id
                )));
            }
            if s.label.is_some() != has_labels {
                return Err(Error::Parameter(format!(
                    "sample {} label presence differs from sample {}",
                    s.sample_id, first.sample_id
                )));
            }
            for (c, (_, t)) in cols.iter_mut().zip(&s.views) {
                c.extend_from_slice(t.data());
            }
            if let Some(l) = s.label {
                labels.push(l);
            }
            ids.push(s.sample_id);
        }
        let mut sorted = ids.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Parameter("duplicate sample_id in dataset".into()));
        }
        let n = samples.len();
        let data = cols
            .into_iter()
            .zip(&shapes)
            .map(|(c, s)| Tensor::matrix(n, s.iter().product(), c))
            .collect::<Result<Vec<_>>>()?;
        let mut ds = Self::new(names, shapes, data, has_labels.then_some(labels))?;
        ds.sample_ids = ids;
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sample_ids.is_empty()
    }

    pub fn view_names(&self) -> &[String] {
        &self.names
    }

    pub fn view_shape(&self, name: &str) -> Option<&[usize]> {
        self.index_of(name).map(|i| self.shapes[i].as_slice())
    }

    pub fn view_shapes(&self) -> &[Vec<usize>] {
        &self.shapes
    }

    /// Flattened dimension of a view.
    pub fn view_dim(&self, name: &str) -> Option<usize> {
        self.view_shape(name).map(|s| s.iter().product())
    }

    fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// The `[N × flat_dim]` matrix of one view.
    pub fn view(&self, name: &str) -> Result<&Tensor> {
        self.index_of(name)
            .map(|i| &self.data[i])
            .ok_or_else(|| Error::GraphMismatch(format!("dataset has no view {name:?}")))
    }

    pub fn matrices(&self) -> &[Tensor] {
        &self.data
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn sample_ids(&self) -> &[usize] {
        &self.sample_ids
    }

    /// Row `i` as a [`ViewSet`] with views reshaped to their native shapes.
    pub fn sample(&self, i: usize) -> ViewSet {
        let views = self
            .names
            .iter()
            .zip(&self.shapes)
            .zip(&self.data)
            .map(|((n, s), m)| {
                (
                    n.clone(),
                    Tensor::new(s.clone(), m.row(i).to_vec()).expect("stored shape"),
                )
            })
            .collect();
        ViewSet {
            sample_id: self.sample_ids[i],
            views,
            label: self.labels.as_ref().map(|l| l[i]),
        }
    }

    /// Rows `rows` (positions, not ids) as a new dataset; sample ids are kept.
    pub fn subset(&self, rows: &[usize]) -> Result<Self> {
        let data = self
            .data
            .iter()
            .map(|m| m.gather_rows(rows))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            names: self.names.clone(),
            shapes: self.shapes.clone(),
            data,
            sample_ids: rows.iter().map(|&r| self.sample_ids[r]).collect(),
            labels: self
                .labels
                .as_ref()
                .map(|l| rows.iter().map(|&r| l[r]).collect()),
        })
    }

    /// Keeps only the named views, in the given order.
    pub fn select_views(&self, names: &[&str]) -> Result<Self> {
        let mut out_names = Vec::new();
        let mut shapes = Vec::new();
        let mut data = Vec::new();
        for n in names {
            let i = self
                .index_of(n)
                .ok_or_else(|| Error::GraphMismatch(format!("dataset has no view {n:?}")))?;
            out_names.push(self.names[i].clone());
            shapes.push(self.shapes[i].clone());
            data.push(self.data[i].clone());
        }
        Ok(Self {
            names: out_names,
            shapes,
            data,
            sample_ids: self.sample_ids.clone(),
            labels: self.labels.clone(),
        })
    }

    /// Replaces the labels.
    pub fn with_labels(mut self, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != self.len() {
            return Err(Error::Parameter(format!(
                "{} labels for {} samples",
                labels.len(),
                self.len()
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    /// Splits rows into a leading train part and a trailing test part.
    pub fn split(&self, train_fraction: f64) -> Result<(Self, Self)> {
        let n_train = ((self.len() as f64) * train_fraction).round() as usize;
        if n_train == 0 || n_train >= self.len() {
            return Err(Error::Parameter(format!(
                "train fraction {train_fraction} leaves an empty split of {} samples",
                self.len()
            )));
        }
        let train: Vec<usize> = (0..n_train).collect();
        let test: Vec<usize> = (n_train..self.len()).collect();
        Ok((self.subset(&train)?, self.subset(&test)?))
    }
}

// ---------------------------------------------------------------------------
// Colorspaces

/// Linear sRGB → XYZ matrix.
const RGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.412_453, 0.357_580, 0.180_423],
    [0.212_671, 0.715_160, 0.072_169],
    [0.019_334, 0.119_193, 0.950_227],
];

/// D65 reference white, 2° observer.
const D65: [f64; 3] = [0.950_47, 1.0, 1.088_83];


fn srgb_to_linear(c: f64) -> f64 {
    if c <= 0.040_45 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

fn lab_f(t: f64) -> f64 {
    const DELTA: f64 = 6.0 / 29.0;
    if t > DELTA * DELTA * DELTA {
        t.cbrt()
    } else {
        t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
    }
}

/// CIE L*a*b* of one sRGB pixel with components in `[0, 1]`.
pub fn srgb_pixel_to_lab(rgb: [f64; 3]) -> [f64; 3] {
    let lin = rgb.map(srgb_to_linear);
    let wp = D65;
    let mut xyz = [0.0; 3];
    for (x, row) in xyz.iter_mut().zip(RGB_TO_XYZ.iter()) {
        *x = row.iter().zip(&lin).map(|(m, c)| m * c).sum();
    }
    let fx = lab_f(xyz[0] / wp[0]);
    let fy = lab_f(xyz[1] / wp[1]);
    let fz = lab_f(xyz[2] / wp[2]);
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

/// YDbDr (SECAM) of one RGB pixel.
pub fn rgb_pixel_to_ydbdr(rgb: [f64; 3]) -> [f64; 3] {
    let [r, g, b] = rgb;
    [
        0.299 * r + 0.587 * g + 0.114 * b,
        -0.450 * r - 0.883 * g + 1.333 * b,
        -1.333 * r + 1.116 * g + 0.217 * b,
    ]
}

fn check_rgb_image(rgb: &Tensor) -> Result<(usize, usize)> {
    let s = rgb.shape();
    if s.len() != 3 || s[2] != 3 {
        return Err(crate::error::shape_err(
            "colorspace",
            format!("expected [h×w×3], got {s:?}"),
        ));
    }
    if let Some(v) = rgb.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Range(format!("RGB value {v} outside [0, 1]")));
    }
    Ok((s[0], s[1]))
}

fn split_channels(
    rgb: &Tensor,
    convert: impl Fn([f64; 3]) -> [f64; 3],
) -> Result<(Tensor, Tensor)> {
    let (h, w) = check_rgb_image(rgb)?;
    let mut first = Vec::with_capacity(h * w);
    let mut rest = Vec::with_capacity(2 * h * w);
    for px in rgb.data().chunks_exact(3) {
        let c = convert([px[0], px[1], px[2]]);
        first.push(c[0]);
        rest.extend_from_slice(&c[1..]);
    }
    Ok((
        Tensor::new(vec![h, w, 1], first)?,
        Tensor::new(vec![h, w, 2], rest)?,
    ))
}

/// Splits an `[h×w×3]` sRGB image into the `L` and `ab` views.
pub fn rgb_to_lab(rgb: &Tensor) -> Result<(Tensor, Tensor)> {
    split_channels(rgb, srgb_pixel_to_lab)
}

/// Splits an `[h×w×3]` RGB image into the `Y` and `DbDr` views.
pub fn rgb_to_ydbdr(rgb: &Tensor) -> Result<(Tensor, Tensor)> {
    split_channels(rgb, rgb_pixel_to_ydbdr)
}

// ---------------------------------------------------------------------------
// Patches and procedural images

/// Cuts two `p×p` patches whose top-left corners are `(x, y)` and
/// `(x+d, y+d)`, with `(x, y)` uniform over the positions where both fit.
pub fn extract_patch_pair<R: Rng + ?Sized>(
    image: &Tensor,
    patch: usize,
    distance: usize,
    rng: &mut R,
) -> Result<(Tensor, Tensor)> {
    let s = image.shape();
    if s.len() != 3 {
        return Err(crate::error::shape_err(
            "extract_patch_pair",
            format!("expected [h×w×c], got {s:?}"),
        ));
    }
    if patch == 0 || distance < patch {
        return Err(Error::Parameter(format!(
            "patch distance {distance} must be at least the patch size {patch} (>0) so patches do not overlap"
        )));
    }
    let (h, w, c) = (s[0], s[1], s[2]);
    if distance + patch > h || distance + patch > w {
        return Err(Error::Geometry(format!(
            "{h}×{w} image cannot hold two {patch}×{patch} patches offset by {distance}"
        )));
    }
    let x = rng.random_range(0..=w - patch - distance);
    let y = rng.random_range(0..=h - patch - distance);
    let cut = |x0: usize, y0: usize| {
        let mut out = Vec::with_capacity(patch * patch * c);
        for row in y0..y0 + patch {
            let start = (row * w + x0) * c;
            out.extend_from_slice(&image.data()[start..start + patch * c]);
        }
        Tensor::new(vec![patch, patch, c], out)
    };
    Ok((cut(x, y)?, cut(x + distance, y + distance)?))
}

/// Procedural RGB images: a smooth background gradient, a few soft blobs and
/// one class-coloured square. Returns `(image, label)` pairs with values in
/// `[0, 1]`.
pub fn procedural_images(
    n: usize,
    size: usize,
    n_classes: usize,
    seed: u64,
) -> Result<Vec<(Tensor, usize)>> {
    if n_classes == 0 || size < 4 {
        return Err(Error::Parameter(format!(
            "procedural images need n_classes ≥ 1 and size ≥ 4 (got {n_classes}, {size})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let palette: Vec<[f64; 3]> = (0..n_classes)
        .map(|c| {
            let hue = c as f64 / n_classes as f64 * std::f64::consts::TAU;
            [
                0.5 + 0.45 * hue.cos(),
                0.5 + 0.45 * (hue + 2.094).cos(),
                0.5 + 0.45 * (hue + 4.189).cos(),
            ]
        })
        .collect();
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let label = rng.random_range(0..n_classes);
        let base: [f64; 3] = [rng.random(), rng.random(), rng.random()];
        let grad: [f64; 2] = [rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)];
        let blobs: Vec<(f64, f64, f64, [f64; 3])> = (0..3)
            .map(|_| {
                (
                    rng.random_range(0.0..size as f64),
                    rng.random_range(0.0..size as f64),
                    rng.random_range(1.5..size as f64 / 4.0 + 2.0),
                    [rng.random(), rng.random(), rng.random()],
                )
            })
            .collect();
        let side = rng.random_range(size / 4..=size / 2).max(2);
        let sx = rng.random_range(0..=size - side);
        let sy = rng.random_range(0..=size - side);
        let col = palette[label];
        let mut data = Vec::with_capacity(size * size * 3);
        for y in 0..size {
            for x in 0..size {
                let (fx, fy) = (x as f64 / size as f64, y as f64 / size as f64);
                let mut px = [0.0; 3];
                for ch in 0..3 {
                    px[ch] = base[ch] * 0.6 + 0.2 + grad[0] * (fx - 0.5) + grad[1] * (fy - 0.5);
                }
                for (bx, by, r, bc) in &blobs {
                    let d2 = ((x as f64 - bx).powi(2) + (y as f64 - by).powi(2)) / (r * r);
                    let wgt = (-d2).exp() * 0.5;
                    for ch in 0..3 {
                        px[ch] = px[ch] * (1.0 - wgt) + bc[ch] * wgt;
                    }
                }
                if (sx..sx + side).contains(&x) && (sy..sy + side).contains(&y) {
                    px = col;
                }
                data.extend(px.iter().map(|v| v.clamp(0.0, 1.0)));
            }
        }
        out.push((Tensor::new(vec![size, size, 3], data)?, label));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Synthetic generators

/// Paired Gaussian views `x`, `y` with per-coordinate correlation `rho`.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticGaussianSpec {
    pub dim: usize,
    pub rho: f64,
    pub n_samples: usize,
    pub seed: u64,
}

fn check_rho(rho: f64) -> Result<()> {
    if !(rho.abs() < 1.0) {
        return Err(Error::Parameter(format!("correlation must satisfy |rho| < 1, got {rho}")));
    }
    Ok(())
}

/// Mutual information in nats between two unit-variance Gaussians with
/// correlation `rho`.
pub fn gaussian_mi_per_coordinate(rho: f64) -> Result<f64> {
    check_rho(rho)?;
    Ok(-0.5 * (1.0 - rho * rho).ln())
}

/// `dim × (−½ ln(1 − rho²))`.
pub fn analytic_gaussian_mi(spec: &SyntheticGaussianSpec) -> Result<f64> {
    Ok(spec.dim as f64 * gaussian_mi_per_coordinate(spec.rho)?)
}

/// Log of `p(x, y) / (p(x) p(y))` for one coordinate pair of a standard
/// bivariate Gaussian with correlation `rho`.
pub fn gaussian_log_density_ratio(x: f64, y: f64, rho: f64) -> f64 {
    let r2 = rho * rho;
    -0.5 * (1.0 - r2).ln() - (r2 * x * x - 2.0 * rho * x * y + r2 * y * y) / (2.0 * (1.0 - r2))
}

pub fn gen_gaussian_views(spec: &SyntheticGaussianSpec) -> Result<Dataset> {
    check_rho(spec.rho)?;
    if spec.dim == 0 || spec.n_samples == 0 {
        return Err(Error::Parameter("dim and n_samples must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let resid = (1.0 - spec.rho * spec.rho).sqrt();
    let n = spec.n_samples * spec.dim;
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let x: f64 = rng.sample(StandardNormal);
        let e: f64 = rng.sample(StandardNormal);
        xs.push(x);
        ys.push(spec.rho * x + resid * e);
    }
    Dataset::new(
        vec!["x".into(), "y".into()],
        vec![vec![spec.dim]; 2],
        vec![
            Tensor::matrix(spec.n_samples, spec.dim, xs)?,
            Tensor::matrix(spec.n_samples, spec.dim, ys)?,
        ],
        None,
    )
}

/// `M` views of one shared Gaussian latent, each through its own random
/// linear map plus independent noise; labels are the angular sector of the
/// first two latent coordinates (the sign of the first when `latent_dim`
/// is 1).
#[derive(Clone, Debug, PartialEq)]
pub struct SharedFactorSpec {
    pub latent_dim: usize,
    pub n_views: usize,
    pub view_dim: usize,
    /// One noise standard deviation per view.
    pub noise_sigma: Vec<f64>,
    pub n_classes: usize,
    pub n_samples: usize,
    pub seed: u64,
}

impl SharedFactorSpec {
    /// Same noise level on every view.
    pub fn uniform_noise(
        latent_dim: usize,
        n_views: usize,
        view_dim: usize,
        noise_sigma: f64,
        n_classes: usize,
        n_samples: usize,
        seed: u64,
    ) -> Self {
        Self {
            latent_dim,
            n_views,
            view_dim,
            noise_sigma: vec![noise_sigma; n_views],
            n_classes,
            n_samples,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_views == 0 || self.latent_dim == 0 || self.view_dim == 0 || self.n_samples == 0 {
            return Err(Error::Parameter(
                "latent_dim, n_views, view_dim and n_samples must be positive".into(),
            ));
        }
        if self.noise_sigma.len() != self.n_views {
            return Err(Error::Parameter(format!(
                "{} noise levels for {} views",
                self.noise_sigma.len(),
                self.n_views
            )));
        }
        if self.noise_sigma.iter().any(|s| !(*s >= 0.0)) {
            return Err(Error::Parameter("noise_sigma must be ≥ 0".into()));
        }
        if self.n_classes < 2 || (self.latent_dim == 1 && self.n_classes != 2) {
            return Err(Error::Parameter(format!(
                "n_classes = {} is not supported for latent_dim = {}",
                self.n_classes, self.latent_dim
            )));
        }
        Ok(())
    }
}

/// Class of a latent vector: angular sector of `(z0, z1)`, or sign of `z0`.
pub fn sector_label(latent: &[f64], n_classes: usize) -> usize {
    if latent.len() == 1 {
        return usize::from(latent[0] >= 0.0);
    }
    let angle = latent[1].atan2(latent[0]) + std::f64::consts::PI;
    ((angle / std::f64::consts::TAU * n_classes as f64) as usize).min(n_classes - 1)
}

/// The shared latents and per-view projection matrices behind a
/// [`gen_shared_factor`] dataset.
#[derive(Clone, Debug)]
pub struct SharedFactorTruth {
    /// `[N × latent_dim]`
    pub latents: Tensor,
    /// One `[latent_dim × view_dim]` map per view.
    pub projections: Vec<Tensor>,
}

pub fn gen_shared_factor(spec: &SharedFactorSpec) -> Result<Dataset> {
    gen_shared_factor_with_truth(spec).map(|(d, _)| d)
}

pub fn gen_shared_factor_with_truth(spec: &SharedFactorSpec) -> Result<(Dataset, SharedFactorTruth)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (l, vd, n) = (spec.latent_dim, spec.view_dim, spec.n_samples);
    let scale = 1.0 / (l as f64).sqrt();
    let projections: Vec<Tensor> = (0..spec.n_views)
        .map(|_| {
            let w: Vec<f64> = (0..l * vd)
                .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
                .collect();
            Tensor::matrix(l, vd, w)
        })
        .collect::<Result<_>>()?;
    let latents: Vec<f64> = (0..n * l).map(|_| rng.sample(StandardNormal)).collect();
    let latents = Tensor::matrix(n, l, latents)?;
    let labels: Vec<usize> = (0..n)
        .map(|i| sector_label(latents.row(i), spec.n_classes))
        .collect();
    let mut data = Vec::with_capacity(spec.n_views);
    for (proj, &sigma) in projections.iter().zip(&spec.noise_sigma) {
        let mut m = latents.matmul(proj)?;
        for v in m.data_mut() {
            *v += sigma * rng.sample::<f64, _>(StandardNormal);
        }
        data.push(m);
    }
    let names = (1..=spec.n_views).map(|i| format!("v{i}")).collect();
    let ds = Dataset::new(names, vec![vec![vd]; spec.n_views], data, Some(labels))?;
    Ok((
        ds,
        SharedFactorTruth {
            latents,
            projections,
        },
    ))
}

/// Two views that share a label-bearing signal and a label-free nuisance
/// factor to separately controlled degrees.
///
/// Each view holds `signal_dim` signal coordinates correlated `signal_rho`
/// across views and `nuisance_dim` nuisance coordinates (scaled by
/// `nuisance_scale`) correlated `nuisance_rho` across views, mixed by a
/// random invertible map per view. Labels are the sector of the common
/// signal component, so with `signal_rho = 0` a view carries no label
/// information.
#[derive(Clone, Debug, PartialEq)]
pub struct PartialSharingSpec {
    pub signal_dim: usize,
    pub nuisance_dim: usize,
    pub signal_rho: f64,
    pub nuisance_rho: f64,
    pub nuisance_scale: f64,
    pub n_classes: usize,
    pub n_samples: usize,
    pub seed: u64,
}

impl PartialSharingSpec {
    /// Closed-form `I(v1; v2)` in nats.
    pub fn analytic_mi(&self) -> Result<f64> {
        Ok(self.signal_dim as f64 * gaussian_mi_per_coordinate(self.signal_rho)?
            + self.nuisance_dim as f64 * gaussian_mi_per_coordinate(self.nuisance_rho)?)
    }
}

pub fn gen_partial_sharing(spec: &PartialSharingSpec) -> Result<Dataset> {
    for rho in [spec.signal_rho, spec.nuisance_rho] {
        check_rho(rho)?;
        if rho < 0.0 {
            return Err(Error::Parameter(format!("sharing correlation must be ≥ 0, got {rho}")));
        }
    }
    if spec.signal_dim < 2 && spec.n_classes != 2 {
        return Err(Error::Parameter("signal_dim 1 only supports 2 classes".into()));
    }
    if spec.n_samples == 0 || spec.signal_dim == 0 {
        return Err(Error::Parameter("n_samples and signal_dim must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let dim = spec.signal_dim + spec.nuisance_dim;
    // Well-conditioned mixing: identity plus a small random perturbation.
    let mixes: Vec<Tensor> = (0..2)
        .map(|_| {
            let mut m = Tensor::identity(dim);
            for v in m.data_mut() {
                *v += 0.3 * rng.sample::<f64, _>(StandardNormal) / (dim as f64).sqrt();
            }
            m
        })
        .collect();
    let (cs, is) = (spec.signal_rho.sqrt(), (1.0 - spec.signal_rho).sqrt());
    let (cn, in_) = (spec.nuisance_rho.sqrt(), (1.0 - spec.nuisance_rho).sqrt());
    let mut raw = [Vec::with_capacity(spec.n_samples * dim), Vec::with_capacity(spec.n_samples * dim)];
    let mut labels = Vec::with_capacity(spec.n_samples);
    for _ in 0..spec.n_samples {
        let common: Vec<f64> = (0..spec.signal_dim).map(|_| rng.sample(StandardNormal)).collect();
        let nuisance: Vec<f64> = (0..spec.nuisance_dim).map(|_| rng.sample(StandardNormal)).collect();
        labels.push(sector_label(&common, spec.n_classes));
        for view in raw.iter_mut() {
            for c in &common {
                view.push(cs * c + is * rng.sample::<f64, _>(StandardNormal));
            }
            for u in &nuisance {
                view.push(spec.nuisance_scale * (cn * u + in_ * rng.sample::<f64, _>(StandardNormal)));
            }
        }
    }
    let [r1, r2] = raw;
    let v1 = Tensor::matrix(spec.n_samples, dim, r1)?.matmul(&mixes[0])?;
    let v2 = Tensor::matrix(spec.n_samples, dim, r2)?.matmul(&mixes[1])?;
    Dataset::new(
        vec!["v1".into(), "v2".into()],
        vec![vec![dim]; 2],
        vec![v1, v2],
        Some(labels),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pixel(rgb: [f64; 3]) -> Tensor {
        Tensor::new(vec![1, 1, 3], rgb.to_vec()).unwrap()
    }

    /// Inverse of `srgb_pixel_to_lab`, test-only.
    fn lab_to_srgb(lab: [f64; 3]) -> [f64; 3] {
        const DELTA: f64 = 6.0 / 29.0;
        let finv = |t: f64| {
            if t > DELTA {
                t * t * t
            } else {
                3.0 * DELTA * DELTA * (t - 4.0 / 29.0)
            }
        };
        let wp = D65;
        let fy = (lab[0] + 16.0) / 116.0;
        let fx = fy + lab[1] / 500.0;
        let fz = fy - lab[2] / 200.0;
        let xyz = [wp[0] * finv(fx), wp[1] * finv(fy), wp[2] * finv(fz)];
        // Invert the 3×3 matrix by Cramer's rule.
        let m = RGB_TO_XYZ;
        let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
        let inv = [
            [
                (m[1][1] * m[2][2] - m[1][2] * m[2][1]) / det,
                (m[0][2] * m[2][1] - m[0][1] * m[2][2]) / det,
                (m[0][1] * m[1][2] - m[0][2] * m[1][1]) / det,
            ],
            [
                (m[1][2] * m[2][0] - m[1][0] * m[2][2]) / det,
                (m[0][0] * m[2][2] - m[0][2] * m[2][0]) / det,
                (m[0][2] * m[1][0] - m[0][0] * m[1][2]) / det,
            ],
            [
                (m[1][0] * m[2][1] - m[1][1] * m[2][0]) / det,
                (m[0][1] * m[2][0] - m[0][0] * m[2][1]) / det,
                (m[0][0] * m[1][1] - m[0][1] * m[1][0]) / det,
            ],
        ];
        let lin: Vec<f64> = inv
            .iter()
            .map(|r| r.iter().zip(&xyz).map(|(a, b)| a * b).sum())
            .collect();
        let gamma = |c: f64| {
            if c <= 0.003_130_8 {
                12.92 * c
            } else {
                1.055 * c.powf(1.0 / 2.4) - 0.055
            }
        };
        [gamma(lin[0]), gamma(lin[1]), gamma(lin[2])]
    }

    #[test]
    fn lab_white_and_black() {
        let (l, ab) = rgb_to_lab(&pixel([1.0, 1.0, 1.0])).unwrap();
        assert!((l.data()[0] - 100.0).abs() < 1e-9);
        assert!(ab.data().iter().all(|v| v.abs() < 0.01));
        let (l, ab) = rgb_to_lab(&pixel([0.0, 0.0, 0.0])).unwrap();
        assert_eq!(l.data(), &[0.0]);
        assert_eq!(ab.data(), &[0.0, 0.0]);
    }

    #[test]
    fn lab_red_golden() {
        // Frozen from an independent reference implementation
        // (scikit-image rgb2lab, D65 / 2°).
        let lab = srgb_pixel_to_lab([1.0, 0.0, 0.0]);
        let golden = [53.240_587_94, 80.092_308_23, 67.202_751_04];
        for (a, b) in lab.iter().zip(golden) {
            assert!((a - b).abs() < 1e-3, "{lab:?}");
        }
        let lab = srgb_pixel_to_lab([0.2, 0.4, 0.6]);
        let golden = [42.008_000_59, -0.154_041_2, -32.842_897_42];
        for (a, b) in lab.iter().zip(golden) {
            assert!((a - b).abs() < 1e-3, "{lab:?}");
        }
    }

    #[test]
    fn ydbdr_examples() {
        let (y, dd) = rgb_to_ydbdr(&pixel([1.0, 1.0, 1.0])).unwrap();
        assert!((y.data()[0] - 1.0).abs() < 1e-12);
        assert!(dd.data().iter().all(|v| v.abs() < 1e-12));
        let (y, dd) = rgb_to_ydbdr(&pixel([0.0, 0.0, 0.0])).unwrap();
        assert_eq!((y.data(), dd.data()), (&[0.0][..], &[0.0, 0.0][..]));
        let [y, db, dr] = rgb_pixel_to_ydbdr([1.0, 0.0, 0.0]);
        assert!((y - 0.299).abs() < 1e-3 && (db + 0.450).abs() < 1e-3 && (dr + 1.333).abs() < 1e-3);
    }

    #[test]
    fn colorspace_rejects_out_of_range() {
        assert!(matches!(rgb_to_lab(&pixel([1.2, 0.0, 0.0])), Err(Error::Range(_))));
        assert!(matches!(rgb_to_ydbdr(&pixel([0.0, -0.1, 0.0])), Err(Error::Range(_))));
    }

    #[test]
    fn lab_round_trip_on_grid() {
        let steps = [0.0, 0.01, 0.04, 0.2, 0.5, 0.77, 0.99, 1.0];
        for r in steps {
            for g in steps {
                for b in steps {
                    let back = lab_to_srgb(srgb_pixel_to_lab([r, g, b]));
                    for (x, y) in back.iter().zip([r, g, b]) {
                        assert!((x - y).abs() < 1e-6, "{r} {g} {b} -> {back:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn patch_pair_forced_corner() {
        let data: Vec<f64> = (0..16 * 16).map(|v| v as f64).collect();
        let img = Tensor::new(vec![16, 16, 1], data).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (a, b) = extract_patch_pair(&img, 4, 12, &mut rng).unwrap();
        assert_eq!(a.data()[0], 0.0);
        assert_eq!(b.data()[0], (12 * 16 + 12) as f64);
    }

    #[test]
    fn patch_pair_gradient_image() {
        // value = 0.01·x + 0.02·y
        let (h, w) = (40, 40);
        let data: Vec<f64> = (0..h * w)
            .map(|i| 0.01 * (i % w) as f64 + 0.02 * (i / w) as f64)
            .collect();
        let img = Tensor::new(vec![h, w, 1], data).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let (a, b) = extract_patch_pair(&img, 8, 12, &mut rng).unwrap();
            let mean = |t: &Tensor| t.data().iter().sum::<f64>() / t.len() as f64;
            assert!((mean(&b) - mean(&a) - (0.01 + 0.02) * 12.0).abs() < 1e-12);
        }
    }

    #[test]
    fn patch_pair_uniform_image_and_errors() {
        let img = Tensor::filled(&[20, 20, 3], 0.3);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (a, b) = extract_patch_pair(&img, 8, 8, &mut rng).unwrap();
        assert_eq!(a, b);
        assert!(matches!(
            extract_patch_pair(&img, 8, 16, &mut rng),
            Err(Error::Geometry(_))
        ));
        assert!(extract_patch_pair(&img, 8, 4, &mut rng).is_err());
    }

    fn corr(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    #[test]
    fn gaussian_views_correlation() {
        let mk = |rho| SyntheticGaussianSpec {
            dim: 1,
            rho,
            n_samples: 10_000,
            seed: 3,
        };
        let d = gen_gaussian_views(&mk(0.0)).unwrap();
        assert!(corr(d.view("x").unwrap().data(), d.view("y").unwrap().data()).abs() < 0.05);
        let d = gen_gaussian_views(&mk(0.5)).unwrap();
        let r = corr(d.view("x").unwrap().data(), d.view("y").unwrap().data());
        assert!((r - 0.5).abs() < 0.03, "{r}");
        assert!(matches!(gen_gaussian_views(&mk(1.0)), Err(Error::Parameter(_))));
    }

    #[test]
    fn gaussian_views_covariance_converges() {
        for seed in 0..5 {
            let spec = SyntheticGaussianSpec {
                dim: 2,
                rho: 0.7,
                n_samples: 10_000,
                seed,
            };
            let d = gen_gaussian_views(&spec).unwrap();
            let x = d.view("x").unwrap();
            let y = d.view("y").unwrap();
            let n = d.len() as f64;
            // 4×4 covariance of (x0, x1, y0, y1) against the target.
            let cols: Vec<Vec<f64>> = (0..2)
                .map(|j| (0..d.len()).map(|i| x.row(i)[j]).collect())
                .chain((0..2).map(|j| (0..d.len()).map(|i| y.row(i)[j]).collect()))
                .collect();
            let mut frob = 0.0;
            for a in 0..4 {
                for b in 0..4 {
                    let ma = cols[a].iter().sum::<f64>() / n;
                    let mb = cols[b].iter().sum::<f64>() / n;
                    let c: f64 = cols[a]
                        .iter()
                        .zip(&cols[b])
                        .map(|(p, q)| (p - ma) * (q - mb))
                        .sum::<f64>()
                        / n;
                    let target = if a == b {
                        1.0
                    } else if a % 2 == b % 2 {
                        0.7
                    } else {
                        0.0
                    };
                    frob += (c - target).powi(2);
                }
            }
            assert!(frob.sqrt() < 0.05, "seed {seed}: {}", frob.sqrt());
        }
    }

    #[test]
    fn analytic_mi_values() {
        let mk = |dim, rho| SyntheticGaussianSpec {
            dim,
            rho,
            n_samples: 1,
            seed: 0,
        };
        assert_eq!(analytic_gaussian_mi(&mk(3, 0.0)).unwrap(), 0.0);
        assert!((analytic_gaussian_mi(&mk(1, 0.9)).unwrap() - 0.830_366).abs() < 1e-5);
        assert!((analytic_gaussian_mi(&mk(2, 0.99)).unwrap() - 3.917_035_5).abs() < 1e-6);
        assert!(analytic_gaussian_mi(&mk(1, -1.0)).is_err());
    }

    #[test]
    fn generators_are_deterministic() {
        let spec = SharedFactorSpec::uniform_noise(2, 3, 6, 0.5, 4, 100, 42);
        assert_eq!(gen_shared_factor(&spec).unwrap(), gen_shared_factor(&spec).unwrap());
        let g = SyntheticGaussianSpec {
            dim: 2,
            rho: 0.3,
            n_samples: 50,
            seed: 9,
        };
        assert_eq!(gen_gaussian_views(&g).unwrap(), gen_gaussian_views(&g).unwrap());
    }

    #[test]
    fn shared_factor_quadrant_labels_balanced() {
        let spec = SharedFactorSpec::uniform_noise(2, 2, 4, 1.0, 4, 20_000, 11);
        let d = gen_shared_factor(&spec).unwrap();
        let mut counts = [0usize; 4];
        for &l in d.labels().unwrap() {
            counts[l] += 1;
        }
        for c in counts {
            let frac = c as f64 / 20_000.0;
            assert!((frac - 0.25).abs() < 0.03, "{counts:?}");
        }
    }

    #[test]
    fn shared_factor_noise_averages_down() {
        // With noise σ per view, the least-squares latent reconstruction from
        // each view has independent errors; averaging 4 of them cuts the
        // error variance by ~4.
        let spec = SharedFactorSpec::uniform_noise(2, 4, 8, 2.0, 4, 4000, 5);
        let (d, truth) = gen_shared_factor_with_truth(&spec).unwrap();
        let recon = |v: usize| -> Tensor {
            let w = &truth.projections[v];
            // z ≈ x Wᵀ (W Wᵀ)⁻¹ for a 2×8 W.
            let wwt = w.matmul(&w.transpose().unwrap()).unwrap();
            let (a, b, c, e) = (wwt.data()[0], wwt.data()[1], wwt.data()[2], wwt.data()[3]);
            let det = a * e - b * c;
            let inv = Tensor::from_rows(&[[e / det, -b / det], [-c / det, a / det]]).unwrap();
            let x = d.view(&format!("v{}", v + 1)).unwrap();
            x.matmul(&w.transpose().unwrap()).unwrap().matmul(&inv).unwrap()
        };
        let err_var = |z: &Tensor| {
            z.data()
                .iter()
                .zip(truth.latents.data())
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                / z.len() as f64
        };
        let recons: Vec<Tensor> = (0..4).map(recon).collect();
        let single = err_var(&recons[0]);
        let mut avg = recons[0].clone();
        for r in &recons[1..] {
            for (a, b) in avg.data_mut().iter_mut().zip(r.data()) {
                *a += b;
            }
        }
        for a in avg.data_mut() {
            *a /= 4.0;
        }
        let mean_single = recons.iter().map(err_var).sum::<f64>() / 4.0;
        let ratio = mean_single / err_var(&avg);
        assert!(single > 0.0 && (ratio - 4.0).abs() < 0.6, "ratio {ratio}");
    }

    #[test]
    fn dataset_rejects_mismatched_views() {
        let a = ViewSet {
            sample_id: 0,
            views: vec![("x".into(), Tensor::zeros(&[2]))],
            label: None,
        };
        let mut b = a.clone();
        b.sample_id = 1;
        b.views[0].1 = Tensor::zeros(&[3]);
        assert!(Dataset::from_view_sets(&[a.clone(), b]).is_err());
        let dup = a.clone();
        assert!(Dataset::from_view_sets(&[a.clone(), dup]).is_err());
        let mut c = a.clone();
        c.sample_id = 7;
        let ds = Dataset::from_view_sets(&[a, c]).unwrap();
        assert_eq!(ds.sample(1).sample_id, 7);
    }

    #[test]
    fn partial_sharing_zero_sharing_is_independent() {
        let spec = PartialSharingSpec {
            signal_dim: 2,
            nuisance_dim: 4,
            signal_rho: 0.0,
            nuisance_rho: 0.0,
            nuisance_scale: 2.0,
            n_classes: 4,
            n_samples: 5000,
            seed: 1,
        };
        assert_eq!(spec.analytic_mi().unwrap(), 0.0);
        let d = gen_partial_sharing(&spec).unwrap();
        let v1 = d.view("v1").unwrap();
        let v2 = d.view("v2").unwrap();
        for j in 0..6 {
            let a: Vec<f64> = (0..d.len()).map(|i| v1.row(i)[j]).collect();
            let b: Vec<f64> = (0..d.len()).map(|i| v2.row(i)[j]).collect();
            assert!(corr(&a, &b).abs() < 0.05);
        }
    }
}
