//! Specimen geometry, isotropic material constants and their rasterization
//! onto the regular simulation grid.
//!
//! Cells are indexed `(i, j)` with `i` along the lateral axis `x` and `j`
//! along depth `z` (positive downward, `z = 0` is the top surface). Cell
//! `(i, j)` covers `[i·dx, (i+1)·dx] × [j·dx, (j+1)·dx]`; storage is
//! row-major in `j`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lamé parameters `(λ, μ)` from density and the two body-wave speeds.
///
/// `μ = ρ·c_T²`, `λ = ρ·(c_L² − 2·c_T²)`. A shear speed of zero gives the
/// acoustic fluid limit.
pub fn lame_from_speeds(density: f64, longitudinal: f64, shear: f64) -> Result<(f64, f64)> {
    if !(density.is_finite() && density > 0.0) {
        return Err(Error::InvalidMaterial(format!(
            "density must be positive, got {density}"
        )));
    }
    if !(longitudinal.is_finite() && longitudinal > 0.0) {
        return Err(Error::InvalidMaterial(format!(
            "longitudinal speed must be positive, got {longitudinal}"
        )));
    }
    if !(shear.is_finite() && shear >= 0.0) {
        return Err(Error::InvalidMaterial(format!(
            "shear speed must be non-negative, got {shear}"
        )));
    }
    let mu = density * shear * shear;
    let lambda = density * (longitudinal * longitudinal - 2.0 * shear * shear);
    if lambda < 0.0 {
        return Err(Error::InvalidMaterial(format!(
            "negative Lamé λ: c_L² = {:.6e} < 2·c_T² = {:.6e}",
            longitudinal * longitudinal,
            2.0 * shear * shear
        )));
    }
    Ok((lambda, mu))
}

/// Body-wave speeds `(c_L, c_T)` from density and Lamé parameters.
pub fn speeds_from_lame(density: f64, lambda: f64, mu: f64) -> Result<(f64, f64)> {
    if !(density.is_finite() && density > 0.0) {
        return Err(Error::InvalidMaterial(format!(
            "density must be positive, got {density}"
        )));
    }
    if !(mu.is_finite() && mu >= 0.0) {
        return Err(Error::InvalidMaterial(format!(
            "shear modulus must be non-negative, got {mu}"
        )));
    }
    let p_modulus = lambda + 2.0 * mu;
    if !(p_modulus.is_finite() && p_modulus > 0.0) {
        return Err(Error::InvalidMaterial(format!(
            "λ + 2μ must be positive, got {p_modulus}"
        )));
    }
    Ok(((p_modulus / density).sqrt(), (mu / density).sqrt()))
}

/// Homogeneous isotropic material described by density and wave speeds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialSpec {
    /// kg/m³
    pub density: f64,
    /// m/s
    pub longitudinal_speed: f64,
    /// m/s
    pub shear_speed: f64,
}

impl MaterialSpec {
    pub fn new(density: f64, longitudinal_speed: f64, shear_speed: f64) -> Result<Self> {
        lame_from_speeds(density, longitudinal_speed, shear_speed)?;
        Ok(Self {
            density,
            longitudinal_speed,
            shear_speed,
        })
    }

    /// Handbook aluminum: ρ = 2700 kg/m³, c_L = 6320 m/s, c_T = 3130 m/s.
    pub fn aluminum() -> Self {
        Self {
            density: 2700.0,
            longitudinal_speed: 6320.0,
            shear_speed: 3130.0,
        }
    }

    pub fn lame(&self) -> Result<(f64, f64)> {
        lame_from_speeds(self.density, self.longitudinal_speed, self.shear_speed)
    }
}

impl Default for MaterialSpec {
    fn default() -> Self {
        Self::aluminum()
    }
}

/// Axis-aligned rectangle in metres. `z0` is measured downward from the top
/// surface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub z0: f64,
    pub width: f64,
    pub height: f64,
}

impl Rect {
    pub fn new(x0: f64, z0: f64, width: f64, height: f64) -> Self {
        Self {
            x0,
            z0,
            width,
            height,
        }
    }

    pub fn x1(&self) -> f64 {
        self.x0 + self.width
    }

    pub fn z1(&self) -> f64 {
        self.z0 + self.height
    }

    pub fn contains_rect(&self, other: &Rect, tol: f64) -> bool {
        other.x0 >= self.x0 - tol
            && other.z0 >= self.z0 - tol
            && other.x1() <= self.x1() + tol
            && other.z1() <= self.z1() + tol
    }

    /// Shrinks every side by `amount`; `None` if nothing remains.
    pub fn shrink(&self, amount: f64) -> Option<Rect> {
        let width = self.width - 2.0 * amount;
        let height = self.height - 2.0 * amount;
        (width >= 0.0 && height >= 0.0)
            .then(|| Rect::new(self.x0 + amount, self.z0 + amount, width, height))
    }
}

/// Vertical cross-section of the specimen plus the visualization window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpecimenGeometry {
    /// Lateral extent, m.
    pub width: f64,
    /// Extent below the transducer surface, m.
    pub depth: f64,
    pub view: Rect,
}

impl SpecimenGeometry {
    pub fn new(width: f64, depth: f64, view: Rect) -> Result<Self> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !(positive(width) && positive(depth)) {
            return Err(Error::InvalidGeometry(format!(
                "specimen extents must be positive, got {width} × {depth}"
            )));
        }
        if !(positive(view.width) && positive(view.height)) {
            return Err(Error::InvalidGeometry(format!(
                "view extents must be positive, got {} × {}",
                view.width, view.height
            )));
        }
        let specimen = Rect::new(0.0, 0.0, width, depth);
        if !specimen.contains_rect(&view, 1e-12) {
            return Err(Error::InvalidGeometry(format!(
                "view region [{:.4}, {:.4}] × [{:.4}, {:.4}] m is not inside the {width} × {depth} m specimen",
                view.x0,
                view.x1(),
                view.z0,
                view.z1()
            )));
        }
        Ok(Self { width, depth, view })
    }

    /// 100 mm × 50 mm section with a 20 mm × 50 mm view centred laterally.
    pub fn default_section() -> Self {
        Self {
            width: 0.100,
            depth: 0.050,
            view: Rect::new(0.040, 0.0, 0.020, 0.050),
        }
    }

    pub fn bounds(&self) -> Rect {
        Rect::new(0.0, 0.0, self.width, self.depth)
    }
}

/// Cylindrical cavity seen in cross-section as a circle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DefectSpec {
    /// Centre `(x, z)` in metres.
    pub center: (f64, f64),
    /// m
    pub diameter: f64,
}

impl DefectSpec {
    pub fn new(x: f64, z: f64, diameter: f64) -> Self {
        Self {
            center: (x, z),
            diameter,
        }
    }

    pub fn radius(&self) -> f64 {
        0.5 * self.diameter
    }

    /// Checks that the circle keeps at least `margin` clearance to every side
    /// of `region`.
    pub fn check_within(&self, region: &Rect, margin: f64) -> Result<()> {
        let (x, z) = self.center;
        let reach = self.radius() + margin;
        if x - reach < region.x0
            || x + reach > region.x1()
            || z - reach < region.z0
            || z + reach > region.z1()
        {
            return Err(Error::Placement(format!(
                "defect at ({:.4e}, {:.4e}) m, d = {:.3e} m violates the {:.3e} m margin of region [{:.4e}, {:.4e}] × [{:.4e}, {:.4e}]",
                x,
                z,
                self.diameter,
                margin,
                region.x0,
                region.x1(),
                region.z0,
                region.z1()
            )));
        }
        Ok(())
    }
}

/// Rasterized material: per-cell density and Lamé parameters plus the
/// void (cavity) flag.
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialField {
    pub dx: f64,
    pub nx: usize,
    pub nz: usize,
    pub geometry: SpecimenGeometry,
    density: Vec<f64>,
    lambda: Vec<f64>,
    mu: Vec<f64>,
    void: Vec<bool>,
}

impl MaterialField {
    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn cell_center(&self, i: usize, j: usize) -> (f64, f64) {
        ((i as f64 + 0.5) * self.dx, (j as f64 + 0.5) * self.dx)
    }

    pub fn is_void(&self, i: usize, j: usize) -> bool {
        self.void[self.index(i, j)]
    }

    pub fn density(&self, i: usize, j: usize) -> f64 {
        self.density[self.index(i, j)]
    }

    pub fn lambda(&self, i: usize, j: usize) -> f64 {
        self.lambda[self.index(i, j)]
    }

    pub fn mu(&self, i: usize, j: usize) -> f64 {
        self.mu[self.index(i, j)]
    }

    pub fn void_mask(&self) -> &[bool] {
        &self.void
    }

    pub fn void_count(&self) -> usize {
        self.void.iter().filter(|v| **v).count()
    }

    /// Gridded extents `(nx·dx, nz·dx)`.
    pub fn extent(&self) -> (f64, f64) {
        (self.nx as f64 * self.dx, self.nz as f64 * self.dx)
    }

    /// Fastest longitudinal speed over solid cells.
    pub fn max_longitudinal_speed(&self) -> f64 {
        (0..self.density.len())
            .filter(|&k| !self.void[k])
            .map(|k| ((self.lambda[k] + 2.0 * self.mu[k]) / self.density[k]).sqrt())
            .fold(0.0, f64::max)
    }

    /// Density of the first solid cell; the specimen is homogeneous.
    pub fn reference_density(&self) -> f64 {
        self.density
            .iter()
            .zip(&self.void)
            .find(|(_, v)| !**v)
            .map(|(d, _)| *d)
            .unwrap_or(0.0)
    }
}

/// Fills a grid of spacing `dx` over the specimen with a single material.
pub fn rasterize_specimen(
    geometry: &SpecimenGeometry,
    material: &MaterialSpec,
    dx: f64,
) -> Result<MaterialField> {
    if !(dx.is_finite() && dx > 0.0) {
        return Err(Error::InvalidResolution(format!(
            "grid spacing must be positive, got {dx}"
        )));
    }
    let min_extent = geometry.width.min(geometry.depth);
    if dx >= min_extent {
        return Err(Error::InvalidResolution(format!(
            "grid spacing {dx} m is not smaller than the smallest specimen extent {min_extent} m"
        )));
    }
    let nx = (geometry.width / dx).round() as usize;
    let nz = (geometry.depth / dx).round() as usize;
    if nx < 2 || nz < 2 {
        return Err(Error::InvalidResolution(format!(
            "grid spacing {dx} m leaves fewer than two cells per axis ({nx} × {nz})"
        )));
    }
    let (lambda, mu) = material.lame()?;
    let n = nx * nz;
    Ok(MaterialField {
        dx,
        nx,
        nz,
        geometry: *geometry,
        density: vec![material.density; n],
        lambda: vec![lambda; n],
        mu: vec![mu; n],
        void: vec![false; n],
    })
}

/// Marks every cell whose centre lies within the defect circle as void.
///
/// The circle must keep at least one cell of clearance from the outer
/// boundary of the gridded specimen.
pub fn insert_cavity(mut field: MaterialField, defect: &DefectSpec) -> Result<MaterialField> {
    if !(defect.diameter.is_finite() && defect.diameter > 0.0) {
        return Err(Error::Placement(format!(
            "defect diameter must be positive, got {}",
            defect.diameter
        )));
    }
    let (width, depth) = field.extent();
    let (x0, z0) = defect.center;
    if !(x0.is_finite() && z0.is_finite()) {
        return Err(Error::Placement("defect centre is not finite".into()));
    }
    defect
        .check_within(&Rect::new(0.0, 0.0, width, depth), field.dx)
        .map_err(|_| {
            Error::Placement(format!(
                "defect at ({x0:.4e}, {z0:.4e}) m with d = {:.3e} m touches the specimen boundary",
                defect.diameter
            ))
        })?;

    let r2 = defect.radius() * defect.radius();
    let dx = field.dx;
    let i_lo = (((x0 - defect.radius()) / dx).floor().max(0.0)) as usize;
    let i_hi = (((x0 + defect.radius()) / dx).ceil() as usize).min(field.nx);
    let j_lo = (((z0 - defect.radius()) / dx).floor().max(0.0)) as usize;
    let j_hi = (((z0 + defect.radius()) / dx).ceil() as usize).min(field.nz);
    for j in j_lo..j_hi {
        for i in i_lo..i_hi {
            let (x, z) = field.cell_center(i, j);
            if (x - x0).powi(2) + (z - z0).powi(2) <= r2 {
                let k = field.index(i, j);
                field.void[k] = true;
            }
        }
    }
    Ok(field)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn aluminum_lame_constants() {
        // μ = 2700·3130² = 26_451_630_000, λ = 2700·(6320² − 2·3130²) = 54_941_220_000
        let (lambda, mu) = lame_from_speeds(2700.0, 6320.0, 3130.0).unwrap();
        assert!(rel(mu, 2.645163e10) < 1e-12, "mu = {mu}");
        assert!(rel(lambda, 5.494122e10) < 1e-12, "lambda = {lambda}");
    }

    #[test]
    fn fluid_limit() {
        let (lambda, mu) = lame_from_speeds(1000.0, 1500.0, 0.0).unwrap();
        assert_eq!(mu, 0.0);
        assert!(rel(lambda, 1000.0 * 1500.0 * 1500.0) < 1e-15);
    }

    #[test]
    fn negative_lambda_rejected() {
        let err = lame_from_speeds(2700.0, 4000.0, 3000.0).unwrap_err();
        assert!(matches!(err, Error::InvalidMaterial(_)), "{err}");
    }

    #[test]
    fn round_trip_aluminum() {
        let (lambda, mu) = lame_from_speeds(2700.0, 6320.0, 3130.0).unwrap();
        let (cl, ct) = speeds_from_lame(2700.0, lambda, mu).unwrap();
        assert!(rel(cl, 6320.0) < 1e-9);
        assert!(rel(ct, 3130.0) < 1e-9);
    }

    #[test]
    fn speeds_from_handbook_moduli() {
        let (cl, ct) = speeds_from_lame(2700.0, 5.4941e10, 2.6452e10).unwrap();
        assert!(rel(cl, 6320.0) < 1e-4, "{cl}");
        assert!(rel(ct, 3130.0) < 1e-4, "{ct}");
    }

    #[test]
    fn vacuum_and_bad_density_rejected() {
        assert!(matches!(
            speeds_from_lame(2700.0, 0.0, 0.0),
            Err(Error::InvalidMaterial(_))
        ));
        assert!(matches!(
            speeds_from_lame(0.0, 5e10, 2e10),
            Err(Error::InvalidMaterial(_))
        ));
    }

    #[test]
    fn doubling_density_scales_speeds() {
        let (cl1, ct1) = speeds_from_lame(2700.0, 5e10, 2.5e10).unwrap();
        let (cl2, ct2) = speeds_from_lame(5400.0, 5e10, 2.5e10).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!(rel(cl2, cl1 * s) < 1e-14);
        assert!(rel(ct2, ct1 * s) < 1e-14);
    }

    #[test]
    fn rasterize_counts() {
        let geometry = SpecimenGeometry::new(0.1, 0.05, Rect::new(0.04, 0.0, 0.02, 0.05)).unwrap();
        let field = rasterize_specimen(&geometry, &MaterialSpec::aluminum(), 5e-4).unwrap();
        assert_eq!((field.nx, field.nz), (200, 100));
        assert_eq!(field.void_count(), 0);
        let (lambda, mu) = MaterialSpec::aluminum().lame().unwrap();
        for j in 0..field.nz {
            for i in 0..field.nx {
                assert_eq!(field.density(i, j), 2700.0);
                assert_eq!(field.lambda(i, j), lambda);
                assert_eq!(field.mu(i, j), mu);
            }
        }
    }

    #[test]
    fn rasterize_rejects_degenerate_resolution() {
        let geometry = SpecimenGeometry::default_section();
        let err =
            rasterize_specimen(&geometry, &MaterialSpec::aluminum(), geometry.width).unwrap_err();
        assert!(matches!(err, Error::InvalidResolution(_)));
        assert!(rasterize_specimen(&geometry, &MaterialSpec::aluminum(), 0.0).is_err());
    }

    #[test]
    fn view_outside_specimen_rejected() {
        let err = SpecimenGeometry::new(0.1, 0.05, Rect::new(0.09, 0.0, 0.02, 0.05)).unwrap_err();
        assert!(matches!(err, Error::InvalidGeometry(_)));
    }

    /// Independent count: scan every cell of a bounding grid.
    fn brute_force_void_count(nx: usize, nz: usize, dx: f64, cx: f64, cz: f64, r: f64) -> usize {
        let mut n = 0;
        for j in 0..nz {
            for i in 0..nx {
                let x = (i as f64 + 0.5) * dx;
                let z = (j as f64 + 0.5) * dx;
                if (x - cx) * (x - cx) + (z - cz) * (z - cz) <= r * r {
                    n += 1;
                }
            }
        }
        n
    }

    #[test]
    fn two_mm_cavity_at_half_mm_spacing() {
        let geometry = SpecimenGeometry::new(0.02, 0.02, Rect::new(0.0, 0.0, 0.02, 0.02)).unwrap();
        let field = rasterize_specimen(&geometry, &MaterialSpec::aluminum(), 5e-4).unwrap();
        for &(cx, cz) in &[(0.01, 0.01), (0.01025, 0.0101), (0.0073, 0.0121)] {
            let holed = insert_cavity(field.clone(), &DefectSpec::new(cx, cz, 2e-3)).unwrap();
            let n = holed.void_count();
            assert!((10..=16).contains(&n), "void cells = {n} at ({cx}, {cz})");
            assert_eq!(n, brute_force_void_count(40, 40, 5e-4, cx, cz, 1e-3));
        }
    }

    #[test]
    fn cavity_flags_exactly_the_enclosed_centres() {
        let geometry = SpecimenGeometry::new(0.01, 0.01, Rect::new(0.0, 0.0, 0.01, 0.01)).unwrap();
        let field = rasterize_specimen(&geometry, &MaterialSpec::aluminum(), 2.5e-4).unwrap();
        let defect = DefectSpec::new(0.0047, 0.0052, 1.7e-3);
        let holed = insert_cavity(field.clone(), &defect).unwrap();
        for j in 0..holed.nz {
            for i in 0..holed.nx {
                let (x, z) = holed.cell_center(i, j);
                let inside = (x - 0.0047).powi(2) + (z - 0.0052).powi(2) <= (0.85e-3f64).powi(2);
                assert_eq!(holed.is_void(i, j), inside, "cell ({i}, {j})");
                assert_eq!(holed.density(i, j), field.density(i, j));
            }
        }
    }

    #[test]
    fn empty_or_boundary_defects_rejected() {
        let field = rasterize_specimen(
            &SpecimenGeometry::default_section(),
            &MaterialSpec::aluminum(),
            5e-4,
        )
        .unwrap();
        assert!(matches!(
            insert_cavity(field.clone(), &DefectSpec::new(0.05, 0.02, 0.0)),
            Err(Error::Placement(_))
        ));
        assert!(matches!(
            insert_cavity(field.clone(), &DefectSpec::new(0.05, 0.0005, 2e-3)),
            Err(Error::Placement(_))
        ));
        assert!(matches!(
            insert_cavity(field, &DefectSpec::new(0.0995, 0.02, 2e-3)),
            Err(Error::Placement(_))
        ));
    }

    #[test]
    fn consecutive_cavities_union() {
        let field = rasterize_specimen(
            &SpecimenGeometry::default_section(),
            &MaterialSpec::aluminum(),
            5e-4,
        )
        .unwrap();
        let a = DefectSpec::new(0.03, 0.02, 2e-3);
        let b = DefectSpec::new(0.06, 0.03, 2e-3);
        let only_a = insert_cavity(field.clone(), &a).unwrap();
        let only_b = insert_cavity(field.clone(), &b).unwrap();
        let both = insert_cavity(insert_cavity(field, &a).unwrap(), &b).unwrap();
        for k in 0..both.void_mask().len() {
            assert_eq!(
                both.void_mask()[k],
                only_a.void_mask()[k] || only_b.void_mask()[k]
            );
        }
        let again = insert_cavity(both.clone(), &a).unwrap();
        assert_eq!(again, both);
    }
}
