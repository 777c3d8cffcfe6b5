//! Shared fixtures for the benchmark targets.

use strutnet_core::network::{palmaz, square_section_01mm, steel, zigzag_cylinder, StentNetwork};
use strutnet_core::rod::{CrossSection, Material};

pub fn palmaz_net() -> StentNetwork {
    palmaz(square_section_01mm(), steel())
}

pub fn bench_cylinder(split: usize) -> StentNetwork {
    zigzag_cylinder(
        6,
        4,
        1.0,
        4.0,
        true,
        CrossSection::new(0.05, 0.05),
        Material::new(1.0, 1.0, 100.0),
    )
    .expect("valid parameters")
    .refine(split)
}
