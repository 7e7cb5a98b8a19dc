//! Field statistics, deformation rates and significant-change regions.

use serde::{Deserialize, Serialize};

use super::distance::DeformationField;
use super::mesh::TriangleMesh;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldStats {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub valid_count: usize,
}

fn stats_of(values: impl Iterator<Item = f64> + Clone) -> Result<FieldStats> {
    let n = values.clone().count();
    if n == 0 {
        return Err(Error::NoValidVertices);
    }
    let mean = values.clone().sum::<f64>() / n as f64;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    Ok(FieldStats {
        mean,
        std: var.sqrt(),
        valid_count: n,
    })
}

/// Mean and standard deviation over valid vertices.
pub fn field_stats(field: &DeformationField) -> Result<FieldStats> {
    stats_of(
        field
            .values
            .iter()
            .zip(&field.valid)
            .filter(|(_, &ok)| ok)
            .map(|(&v, _)| v),
    )
}

/// The same statistics ignoring the validity mask.
pub fn field_stats_unmasked(field: &DeformationField) -> Result<FieldStats> {
    stats_of(field.values.iter().copied())
}

/// Magnitude rate in mm/day per vertex; NaN where the field is invalid.
pub fn rate_field(field: &DeformationField) -> Result<Vec<f64>> {
    if !(field.interval_days > 0.0 && field.interval_days.is_finite()) {
        return Err(Error::InvalidInterval(format!(
            "interval must be positive, got {}",
            field.interval_days
        )));
    }
    Ok(field
        .values
        .iter()
        .zip(&field.valid)
        .map(|(&v, &ok)| {
            if ok {
                1000.0 * v.abs() / field.interval_days
            } else {
                f64::NAN
            }
        })
        .collect())
}

/// Connected set of mesh vertices whose rate exceeds a threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    /// 1-based rank by area.
    pub id: usize,
    pub vertex_set: Vec<usize>,
    pub area_m2: f64,
    pub mean_rate_mm_day: f64,
    pub volume_m3: Option<f64>,
    pub w_m: Option<f64>,
    pub l_m: Option<f64>,
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Triangles whose three vertices all belong to `member`.
fn inner_triangles<'a>(mesh: &'a TriangleMesh, member: &'a [bool]) -> impl Iterator<Item = usize> + 'a {
    (0..mesh.triangles.len()).filter(move |&k| mesh.triangles[k].iter().all(|&i| member[i]))
}

/// Groups above-threshold vertices by edge connectivity. A region's area is
/// the projected area of the triangles entirely inside it; regions below
/// `min_area_m2` (or without area) are dropped. Sorted by area, descending.
pub fn significant_regions(
    mesh: &TriangleMesh,
    rates: &[f64],
    threshold_mm_day: f64,
    min_area_m2: f64,
) -> Result<Vec<Region>> {
    if rates.len() != mesh.vertices.len() {
        return Err(Error::param(format!(
            "{} rates for {} vertices",
            rates.len(),
            mesh.vertices.len()
        )));
    }
    let hot: Vec<bool> = rates.iter().map(|&r| r > threshold_mm_day).collect();
    let n = hot.len();
    let mut parent: Vec<usize> = (0..n).collect();
    for t in &mesh.triangles {
        for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
            if hot[a] && hot[b] {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                if ra != rb {
                    parent[ra.max(rb)] = ra.min(rb);
                }
            }
        }
    }
    let mut area = vec![0.0; n];
    for k in inner_triangles(mesh, &hot) {
        let root = find(&mut parent, mesh.triangles[k][0]);
        area[root] += mesh.projected_area(k);
    }
    let mut members: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for i in (0..n).filter(|&i| hot[i]) {
        let root = find(&mut parent, i);
        members.entry(root).or_default().push(i);
    }
    let mut regions: Vec<Region> = members
        .into_iter()
        .filter(|(root, _)| area[*root] > 0.0 && area[*root] >= min_area_m2)
        .map(|(root, vertex_set)| {
            let mean_rate_mm_day = vertex_set.iter().map(|&i| rates[i]).sum::<f64>() / vertex_set.len() as f64;
            Region {
                id: 0,
                vertex_set,
                area_m2: area[root],
                mean_rate_mm_day,
                volume_m3: None,
                w_m: None,
                l_m: None,
            }
        })
        .collect();
    regions.sort_by(|a, b| {
        b.area_m2
            .total_cmp(&a.area_m2)
            .then(a.vertex_set[0].cmp(&b.vertex_set[0]))
    });
    for (k, r) in regions.iter_mut().enumerate() {
        r.id = k + 1;
    }
    Ok(regions)
}

/// Σ over the region's triangles of projected area × mean |displacement|
/// of the three vertices.
pub fn region_volume(region: &Region, field: &DeformationField, mesh: &TriangleMesh) -> Result<f64> {
    if field.values.len() != mesh.vertices.len() {
        return Err(Error::param("field does not match mesh"));
    }
    let mut member = vec![false; mesh.vertices.len()];
    for &i in &region.vertex_set {
        *member
            .get_mut(i)
            .ok_or_else(|| Error::param(format!("region vertex {i} out of range")))? = true;
    }
    Ok(inner_triangles(mesh, &member)
        .map(|k| {
            let depth = mesh.triangles[k].iter().map(|&i| field.values[i].abs()).sum::<f64>() / 3.0;
            mesh.projected_area(k) * depth
        })
        .sum())
}

/// Fills `volume_m3` of every region.
pub fn fill_volumes(regions: &mut [Region], field: &DeformationField, mesh: &TriangleMesh) -> Result<()> {
    for r in regions {
        r.volume_m3 = Some(region_volume(r, field, mesh)?);
    }
    Ok(())
}
