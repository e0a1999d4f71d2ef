use crate::error::{Error, Result};

/// Step decay: `base · factor^(epoch / every)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrSchedule {
    pub base: f64,
    pub factor: f64,
    pub every: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Recipe {
    Pose,
    ImagenetLike,
}

impl std::str::FromStr for Recipe {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pose" => Ok(Recipe::Pose),
            "imagenet_like" => Ok(Recipe::ImagenetLike),
            _ => Err(Error::Config(format!("unknown recipe '{s}'"))),
        }
    }
}

impl LrSchedule {
    pub fn recipe(recipe: Recipe) -> Self {
        match recipe {
            Recipe::Pose => LrSchedule { base: 2.5e-4, factor: 0.1, every: 40 },
            Recipe::ImagenetLike => LrSchedule { base: 1e-3, factor: 0.1, every: 25 },
        }
    }

    pub fn at(&self, epoch: usize) -> f64 {
        self.base * self.factor.powi((epoch / self.every.max(1)) as i32)
    }
}

pub fn lr_schedule(recipe: Recipe, epoch: usize) -> f64 {
    LrSchedule::recipe(recipe).at(epoch)
}
