use listrecon::simulate::{
    attenuation_multipliers, expected_counts, make_phantom, sample_events, sample_listmode,
    PhantomKind, SimConfig,
};
use listrecon::{BinEnumeration, Grid, Image2D, Projector, ScannerGeometry, TofSpec};
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn setup(n: usize) -> (Projector, BinEnumeration) {
    let geom = ScannerGeometry::brain_scanner();
    let tof = TofSpec::standard(300.0, 11).unwrap();
    let grid = Grid::new(n, n, 2.086 * 128.0 / n as f64).unwrap();
    let bins = BinEnumeration::new(&geom, &tof).unwrap();
    (Projector::new(geom, grid, tof).unwrap(), bins)
}

#[test]
fn counts_follow_the_expectation() {
    let (p, bins) = setup(32);
    let phantom = make_phantom(PhantomKind::EllipseBrain, p.grid(), 4).unwrap();
    let cfg = SimConfig::new(1e5, 4);
    let exp = expected_counts(&phantom, &cfg, &p, &bins).unwrap();
    assert!((exp.total() - 1e5).abs() <= 1.0, "{}", exp.total());

    let events = sample_events(&exp, &bins, 4).unwrap();
    let n = events.len() as f64;
    assert!((n - exp.total()).abs() <= 5.0 * exp.total().sqrt(), "{n}");

    // Pool bins by LOR index into groups and compare observed with expected counts.
    let groups = 40;
    let lors_per_group = bins.n_lors().div_ceil(groups);
    let lor_index: std::collections::HashMap<(u16, u16), usize> = bins
        .lors()
        .iter()
        .enumerate()
        .map(|(i, &(a, b))| ((a, b), i))
        .collect();
    let mut observed = vec![0.0; groups];
    for ev in events.iter() {
        observed[lor_index[&(ev.det_a, ev.det_b)] / lors_per_group] += 1.0;
    }
    let mut expected = vec![0.0; groups];
    for i in 0..bins.len() {
        expected[(i / bins.n_bins()) / lors_per_group] += exp.lambda(i);
    }
    let chi2: f64 = observed
        .iter()
        .zip(&expected)
        .map(|(o, e)| (o - e).powi(2) / e)
        .sum();
    let limit = ChiSquared::new((groups - 1) as f64)
        .unwrap()
        .inverse_cdf(0.9999);
    assert!(chi2 < limit, "chi2 {chi2} limit {limit}");
}

#[test]
fn simulation_is_reproducible() {
    let (p, bins) = setup(32);
    let phantom = make_phantom(PhantomKind::EllipseBrain, p.grid(), 9).unwrap();
    let a = sample_listmode(&phantom, &SimConfig::new(2e4, 9), &p, &bins).unwrap();
    let b = sample_listmode(&phantom, &SimConfig::new(2e4, 9), &p, &bins).unwrap();
    assert_eq!(a, b);
    let c = sample_listmode(&phantom, &SimConfig::new(2e4, 10), &p, &bins).unwrap();
    assert_ne!(a.events, c.events);
    assert_eq!(a.expectation, c.expectation);
}

#[test]
fn events_carry_their_bin_multiplier() {
    let (p, bins) = setup(32);
    let phantom = make_phantom(PhantomKind::Disks, p.grid(), 2).unwrap();
    let sim = sample_listmode(&phantom, &SimConfig::new(5e3, 2), &p, &bins).unwrap();
    let n_bins = bins.n_bins();
    let lor_index: std::collections::HashMap<(u16, u16), usize> = bins
        .lors()
        .iter()
        .enumerate()
        .map(|(i, &(a, b))| ((a, b), i))
        .collect();
    for ev in sim.events.iter() {
        let i = lor_index[&(ev.det_a, ev.det_b)] * n_bins + ev.tof_bin as usize;
        assert_eq!(ev.multiplier, sim.expectation.multipliers[i]);
        assert_eq!(bins.bin(i), (ev.det_a, ev.det_b, ev.tof_bin));
    }
}

#[test]
fn diametric_attenuation_of_a_uniform_disk() {
    let (p, bins) = setup(128);
    let grid = p.grid();
    let mu = 0.0096;
    let radius = 100.0;
    let values = (0..grid.len())
        .map(|j| {
            let c = grid.pixel_center(j % grid.width, j / grid.width);
            if (c.x * c.x + c.y * c.y).sqrt() <= radius {
                mu
            } else {
                0.0
            }
        })
        .collect();
    let att = Image2D::from_values(grid, values).unwrap();
    let mult = attenuation_multipliers(&att, &p, &bins).unwrap();
    let chord = mu * 2.0 * radius;
    // The binarized disk edge can shift each end of the chord by up to a pixel.
    let tolerance = 2.0 * mu * grid.spacing;
    let k = p.geometry().n_crystals();
    // Diametrically opposite crystals give a LOR through the disk center.
    for (i, &(a, b)) in bins.lors().iter().enumerate() {
        if (b - a) as usize == k / 2 {
            let line_integral = -mult[i * bins.n_bins()].ln();
            assert!(
                (line_integral - chord).abs() <= tolerance,
                "({a},{b}) {line_integral} vs {chord}"
            );
        }
    }
}
