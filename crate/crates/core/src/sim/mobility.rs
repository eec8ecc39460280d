use rand::Rng;

use super::config::Geometric;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn uniform<R: Rng + ?Sized>(side: f64, rng: &mut R) -> Point {
        Point {
            x: rng.gen::<f64>() * side,
            y: rng.gen::<f64>() * side,
        }
    }
}

/// One random-waypoint walker.
#[derive(Clone, Debug, PartialEq)]
pub struct Walker {
    pub pos: Point,
    target: Point,
    speed: f64,
    pause_left: f64,
}

impl Walker {
    pub fn new<R: Rng + ?Sized>(g: &Geometric, rng: &mut R) -> Self {
        let pos = Point::uniform(g.area_side, rng);
        let mut w = Walker {
            pos,
            target: pos,
            speed: 0.0,
            pause_left: 0.0,
        };
        w.next_leg(g, rng);
        w
    }

    fn next_leg<R: Rng + ?Sized>(&mut self, g: &Geometric, rng: &mut R) {
        self.target = Point::uniform(g.area_side, rng);
        // Speed in (0, speed_max].
        self.speed = g.speed_max * (1.0 - rng.gen::<f64>());
    }

    /// Advances by `dt` seconds: move toward the waypoint, pause on arrival,
    /// then draw the next waypoint and speed.
    pub fn step<R: Rng + ?Sized>(&mut self, g: &Geometric, dt: f64, rng: &mut R) {
        let mut left = dt;
        while left > 0.0 {
            if self.pause_left > 0.0 {
                let p = self.pause_left.min(left);
                self.pause_left -= p;
                left -= p;
                if self.pause_left <= 0.0 {
                    self.next_leg(g, rng);
                }
                continue;
            }
            let d = self.pos.distance(self.target);
            let reach = self.speed * left;
            if reach < d {
                let f = reach / d;
                self.pos.x += (self.target.x - self.pos.x) * f;
                self.pos.y += (self.target.y - self.pos.y) * f;
                return;
            }
            self.pos = self.target;
            left -= d / self.speed;
            if g.pause > 0.0 {
                self.pause_left = g.pause;
            } else {
                self.next_leg(g, rng);
            }
        }
    }
}

/// Moves every walker by `dt` seconds.
pub fn step_mobility<R: Rng + ?Sized>(walkers: &mut [Walker], g: &Geometric, dt: f64, rng: &mut R) {
    for w in walkers {
        w.step(g, dt, rng);
    }
}
