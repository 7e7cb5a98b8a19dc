use slidemon::synth::{apply_landslide, gen_terrain, RegionSpec, TerrainSpec};
use slidemon::terrain::{
    build_dtm, field_stats, fill_volumes, mesh_distance, rate_field, read_field_ply, significant_regions,
    write_field_ply, DistanceParams,
};

fn spec() -> TerrainSpec {
    TerrainSpec {
        extent: [50.0, 50.0],
        slope_deg: 30.0,
        density: 8.0,
        seed: 21,
        ..Default::default()
    }
}

#[test]
fn injected_deposit_becomes_one_region_with_its_volume() {
    let spec = spec();
    let (before, truth) = gen_terrain(&spec).unwrap();
    let slide = RegionSpec {
        center: [4.0, -3.0],
        radius_along: 9.0,
        radius_across: 7.0,
        depth: 0.4,
        azimuth_deg: 180.0,
        taper: 0.15,
    };
    let (after, _) = apply_landslide(&before, &truth, &spec, &slide).unwrap();
    let reference = build_dtm(&before, None, 2.0).unwrap().mesh;
    let compared = build_dtm(&after, Some(reference.plane), 2.0).unwrap().mesh;
    let field = mesh_distance(&compared, &reference, &DistanceParams::default(), 100.0).unwrap();
    let rates = rate_field(&field).unwrap();
    let peak = rates.iter().copied().filter(|r| r.is_finite()).fold(0.0, f64::max);
    // 0.4 m over 100 days
    assert!((peak - 4.0).abs() < 0.2, "peak rate {peak}");

    let mut regions = significant_regions(&compared, &rates, 2.0, 25.0).unwrap();
    assert_eq!(regions.len(), 1);
    fill_volumes(&mut regions, &field, &compared).unwrap();
    let volume = regions[0].volume_m3.unwrap();
    let truth_volume = slide.volume_on(&spec, 0.1);
    // the region stops where the taper falls below the threshold
    assert!(
        volume < truth_volume && volume > 0.8 * truth_volume,
        "{volume} vs {truth_volume}"
    );

    // the file form reproduces the same regions
    let bytes = write_field_ply(&compared, &field).unwrap();
    let (mesh2, field2) = read_field_ply(&bytes).unwrap();
    let mut again = significant_regions(&mesh2, &rate_field(&field2).unwrap(), 2.0, 25.0).unwrap();
    fill_volumes(&mut again, &field2, &mesh2).unwrap();
    assert_eq!(again, regions);
}

#[test]
fn resampled_unchanged_surface_has_no_change() {
    let spec = spec();
    let (a, _) = gen_terrain(&spec).unwrap();
    let (b, _) = gen_terrain(&TerrainSpec { density: 6.0, ..spec }).unwrap();
    let reference = build_dtm(&a, None, 2.0).unwrap().mesh;
    let compared = build_dtm(&b, Some(reference.plane), 2.0).unwrap().mesh;
    let field = mesh_distance(&compared, &reference, &DistanceParams::default(), 30.0).unwrap();
    let stats = field_stats(&field).unwrap();
    // linear interpolation error of the relief only
    assert!(stats.mean.abs() < 0.01 && stats.std < 0.05, "{stats:?}");
    let regions = significant_regions(&compared, &rate_field(&field).unwrap(), 2.0, 25.0).unwrap();
    assert!(regions.is_empty());
}
