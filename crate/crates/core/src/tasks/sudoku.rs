//! 4x4 Sudoku: digits 1-4, 2x2 boxes. Grids are row-major `[u8; 16]`, 0 for a blank.

use std::sync::OnceLock;

use rand::seq::SliceRandom;
use rand::Rng;

pub type Grid = [u8; 16];

fn units() -> Vec<[usize; 4]> {
    let mut u = Vec::with_capacity(12);
    for r in 0..4 {
        u.push([4 * r, 4 * r + 1, 4 * r + 2, 4 * r + 3]);
    }
    for c in 0..4 {
        u.push([c, c + 4, c + 8, c + 12]);
    }
    for (br, bc) in [(0, 0), (0, 2), (2, 0), (2, 2)] {
        let s = 4 * br + bc;
        u.push([s, s + 1, s + 4, s + 5]);
    }
    u
}

/// Every row, column and box is a permutation of 1-4.
pub fn is_solved(grid: &Grid) -> bool {
    units().iter().all(|unit| {
        let mut seen = [false; 5];
        unit.iter().all(|&i| {
            let d = grid[i] as usize;
            (1..=4).contains(&d) && !std::mem::replace(&mut seen[d], true)
        })
    })
}

fn allowed(grid: &Grid, cell: usize, d: u8) -> bool {
    units().iter().filter(|u| u.contains(&cell)).all(|u| u.iter().all(|&i| grid[i] != d))
}

/// Number of completions of `puzzle`, counting no further than `limit`.
pub fn count_solutions(puzzle: &Grid, limit: usize) -> usize {
    fn rec(g: &mut Grid, limit: usize, found: &mut usize) {
        let Some(cell) = g.iter().position(|&d| d == 0) else {
            *found += 1;
            return;
        };
        for d in 1..=4 {
            if *found >= limit {
                return;
            }
            if allowed(g, cell, d) {
                g[cell] = d;
                rec(g, limit, found);
                g[cell] = 0;
            }
        }
    }
    let mut g = *puzzle;
    let mut found = 0;
    rec(&mut g, limit, &mut found);
    found
}

/// Every solved grid, in lexicographic order.
pub fn all_solutions() -> &'static [Grid] {
    static ALL: OnceLock<Vec<Grid>> = OnceLock::new();
    ALL.get_or_init(|| {
        fn rec(g: &mut Grid, out: &mut Vec<Grid>) {
            let Some(cell) = g.iter().position(|&d| d == 0) else {
                out.push(*g);
                return;
            };
            for d in 1..=4 {
                if allowed(g, cell, d) {
                    g[cell] = d;
                    rec(g, out);
                    g[cell] = 0;
                }
            }
        }
        let mut out = Vec::new();
        rec(&mut [0; 16], &mut out);
        out
    })
}

/// A solved grid drawn uniformly.
pub fn random_solution<R: Rng + ?Sized>(rng: &mut R) -> Grid {
    *all_solutions().choose(rng).expect("nonempty")
}

/// Blanks cells of a random solution, in random order, while the puzzle keeps a unique
/// solution, until `givens` remain. Returns `(puzzle, solution)`.
pub fn generate<R: Rng + ?Sized>(rng: &mut R, givens: usize) -> (Grid, Grid) {
    loop {
        let solution = random_solution(rng);
        let mut puzzle = solution;
        let mut cells: Vec<usize> = (0..16).collect();
        cells.shuffle(rng);
        let mut filled = 16;
        for cell in cells {
            if filled == givens {
                break;
            }
            let keep = puzzle[cell];
            puzzle[cell] = 0;
            if count_solutions(&puzzle, 2) == 1 {
                filled -= 1;
            } else {
                puzzle[cell] = keep;
            }
        }
        if filled == givens {
            return (puzzle, solution);
        }
    }
}
