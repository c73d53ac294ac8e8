//! ASCII map parsing and the built-in task layouts.

use thiserror::Error;

/// Contents of one grid cell, before the agent is drawn on top.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cell {
    Floor,
    Wall,
    Key,
    Door,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MapError {
    #[error("map is empty")]
    Empty,
    #[error("line {line}: row has {got} columns, expected {expected}")]
    RaggedRow { line: usize, expected: usize, got: usize },
    #[error("line {line}, column {col}: unknown character {ch:?}")]
    UnknownChar { line: usize, col: usize, ch: char },
    #[error("line {line}, column {col}: duplicate {what}")]
    Duplicate { line: usize, col: usize, what: &'static str },
    #[error("map has no {what}")]
    Missing { what: &'static str },
    #[error("line {line}, column {col}: border cell is not a wall")]
    OpenBorder { line: usize, col: usize },
    #[error("map must be at least 3x3 to have an interior")]
    TooSmall,
}

/// Immutable maze layout: walls, key, door and the agent start cell.
///
/// Row 0 is the top line of the ASCII text; all border cells are walls.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridMap {
    rows: usize,
    cols: usize,
    cells: Vec<Cell>,
    start: (usize, usize),
    key: (usize, usize),
    door: (usize, usize),
}

impl GridMap {
    /// Parses the ASCII format: `#` wall, `.` floor, `K` key, `D` door,
    /// `S` agent start. Exactly one of each of K/D/S; rectangular; walls on
    /// the whole border. Line and column numbers in errors are 1-based.
    pub fn parse(text: &str) -> Result<Self, MapError> {
        let mut lines: Vec<&str> = text.lines().map(|l| l.trim_end_matches('\r')).collect();
        while lines.last().is_some_and(|l| l.is_empty()) {
            lines.pop();
        }
        if lines.is_empty() {
            return Err(MapError::Empty);
        }
        let rows = lines.len();
        let cols = lines[0].chars().count();
        if rows < 3 || cols < 3 {
            return Err(MapError::TooSmall);
        }

        let mut cells = vec![Cell::Floor; rows * cols];
        let mut start = None;
        let mut key = None;
        let mut door = None;
        for (r, line) in lines.iter().enumerate() {
            let got = line.chars().count();
            if got != cols {
                return Err(MapError::RaggedRow { line: r + 1, expected: cols, got });
            }
            for (c, ch) in line.chars().enumerate() {
                let unique = |slot: &mut Option<(usize, usize)>, what| {
                    if slot.is_some() {
                        return Err(MapError::Duplicate { line: r + 1, col: c + 1, what });
                    }
                    *slot = Some((r, c));
                    Ok(())
                };
                cells[r * cols + c] = match ch {
                    '#' => Cell::Wall,
                    '.' => Cell::Floor,
                    'K' => {
                        unique(&mut key, "key")?;
                        Cell::Key
                    }
                    'D' => {
                        unique(&mut door, "door")?;
                        Cell::Door
                    }
                    'S' => {
                        unique(&mut start, "start")?;
                        Cell::Floor
                    }
                    _ => return Err(MapError::UnknownChar { line: r + 1, col: c + 1, ch }),
                };
            }
        }

        let start = start.ok_or(MapError::Missing { what: "start" })?;
        let key = key.ok_or(MapError::Missing { what: "key" })?;
        let door = door.ok_or(MapError::Missing { what: "door" })?;
        for r in 0..rows {
            for c in 0..cols {
                let border = r == 0 || c == 0 || r == rows - 1 || c == cols - 1;
                if border && cells[r * cols + c] != Cell::Wall {
                    return Err(MapError::OpenBorder { line: r + 1, col: c + 1 });
                }
            }
        }
        Ok(GridMap { rows, cols, cells, start, key, door })
    }

    /// Renders back to the ASCII format accepted by [`GridMap::parse`].
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity((self.cols + 1) * self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                let ch = if (r, c) == self.start {
                    'S'
                } else {
                    match self.cell(r, c) {
                        Cell::Floor => '.',
                        Cell::Wall => '#',
                        Cell::Key => 'K',
                        Cell::Door => 'D',
                    }
                };
                out.push(ch);
            }
            out.push('\n');
        }
        out
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn start(&self) -> (usize, usize) {
        self.start
    }

    pub fn key_pos(&self) -> (usize, usize) {
        self.key
    }

    pub fn door_pos(&self) -> (usize, usize) {
        self.door
    }

    pub fn cell(&self, r: usize, c: usize) -> Cell {
        self.cells[r * self.cols + c]
    }

    /// Resolves a built-in layout name, or `None` for unknown names.
    pub fn builtin(name: &str) -> Option<&'static str> {
        match name {
            "corridor" => Some(CORRIDOR),
            "maze1" => Some(MAZE_1_WALL),
            "maze2" => Some(MAZE_2_WALLS),
            "maze3" => Some(MAZE_3_WALLS),
            _ => None,
        }
    }

    pub fn builtin_names() -> &'static [&'static str] {
        &["corridor", "maze1", "maze2", "maze3"]
    }
}

/// One-row corridor: key six steps left of the start, door one step right.
/// The shortest rewarded plan is 13 actions (6 left, then 7 right).
pub const CORRIDOR: &str = "\
##########
#K.....SD#
##########
";

/// 10x10 interior, one wall segment between the start and the key-door pocket.
pub const MAZE_1_WALL: &str = "\
############
#..........#
#..........#
#..D.......#
#..K.......#
#...####...#
#..........#
#.....S....#
#..........#
#..........#
#..........#
############
";

/// 10x10 interior, two wall segments; the short route to the key-door pocket
/// threads the gap between them.
pub const MAZE_2_WALLS: &str = "\
############
#..........#
#..........#
#....D.#...#
#....K.#...#
#..##..#...#
#..........#
#......S...#
#..........#
#..........#
#..........#
############
";

/// 10x10 interior, three wall segments forming a C-shaped chamber; the
/// key-door pocket sits at the back of the chamber, well beyond a single
/// lookahead's reach from the start.
pub const MAZE_3_WALLS: &str = "\
############
#..........#
#.####.....#
#.#DK......#
#.#........#
#.####.....#
#..........#
#..........#
#........S.#
#..........#
#..........#
############
";
