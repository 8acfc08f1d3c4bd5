mod oracles;

use cage_core::geometry::{ConvexPolygon, Point2};
use cage_core::raster::{rasterize_polygons, RasterWindow};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_rect(rng: &mut impl Rng, window: &RasterWindow) -> ConvexPolygon {
    let c = Point2::new(
        window.origin.x + rng.random_range(0.0..window.width),
        window.origin.y + rng.random_range(0.0..window.height),
    );
    ConvexPolygon::oriented_rect(
        c,
        rng.random_range(0.3..6.0),
        rng.random_range(0.3..3.0),
        rng.random_range(-3.2..3.2),
    )
    .unwrap()
}

fn shoelace(v: &[Point2]) -> f64 {
    (0..v.len())
        .map(|i| {
            let (a, b) = (v[i], v[(i + 1) % v.len()]);
            a.x * b.y - b.x * a.y
        })
        .sum::<f64>()
        .abs()
        / 2.0
}

#[test]
fn coverage_matches_monte_carlo() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let window = RasterWindow {
        origin: Point2::new(-2.0, -6.0),
        width: 12.0,
        height: 12.0,
        size: 8,
    };
    for case in 0..10 {
        let polys: Vec<ConvexPolygon> = (0..rng.random_range(1..3))
            .map(|_| random_rect(&mut rng, &window))
            .collect();
        let raster = rasterize_polygons(&polys, &window);
        let verts: Vec<Vec<Point2>> = polys.iter().map(|p| p.vertices().to_vec()).collect();
        let mc = oracles::monte_carlo_raster(&verts, window.origin, window.width, window.height, window.size, 200);
        for (i, (a, b)) in raster.cells.iter().zip(&mc).enumerate() {
            assert!((a - b).abs() <= 0.02, "case {case} cell {i}: exact {a} vs sampled {b}");
        }
    }
}

#[test]
fn coverage_conserves_area_inside_the_window() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let window = RasterWindow {
        origin: Point2::new(0.0, -20.0),
        width: 40.0,
        height: 40.0,
        size: 16,
    };
    let inner = RasterWindow {
        origin: Point2::new(8.0, -12.0),
        width: 24.0,
        height: 24.0,
        size: 1,
    };
    let (cw, ch) = window.cell_size();
    for case in 0..200 {
        let poly = random_rect(&mut rng, &inner);
        let raster = rasterize_polygons(std::slice::from_ref(&poly), &window);
        let covered: f64 = raster.cells.iter().sum::<f64>() * cw * ch;
        let area = shoelace(poly.vertices());
        assert!(
            (covered - area).abs() <= 1e-9 * area.max(1.0),
            "case {case}: {covered} vs {area}"
        );
        assert!(raster.cells.iter().all(|c| (0.0..=1.0).contains(c)));
    }
}

proptest! {
    #[test]
    fn translating_scene_and_window_together_is_exact(
        seed in 0u64..10_000,
        dx in -100.0f64..100.0,
        dy in -100.0f64..100.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let window = RasterWindow::default();
        let poly = random_rect(&mut rng, &window);
        let offset = Point2::new(dx, dy);
        let a = rasterize_polygons(std::slice::from_ref(&poly), &window);
        let moved = poly.map(|p| p + offset);
        let b = rasterize_polygons(&[moved], &window.translated(offset));
        for (x, y) in a.cells.iter().zip(&b.cells) {
            prop_assert!((x - y).abs() <= 1e-9, "{x} vs {y}");
        }
    }
}
