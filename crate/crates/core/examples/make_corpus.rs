//! Regenerates the scripted corpora under `fixtures/corpus/`.
//!
//! ```text
//! cargo run --example make_corpus -- crates/core/fixtures/corpus
//! ```

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use anyhow::{Context, Result};
use serde_json::json;
use wattlens::simulator::{babble_filler, generate_babbler_stream, tokenize_code};
use wattlens::trace::write_token_stream;

const BUDGET: usize = 1000;

struct Task {
    id: &'static str,
    /// Text before the code (fenced tasks only).
    prose: Option<&'static str>,
    code: &'static str,
    tests: &'static str,
}

const BABBLERS: &[Task] = &[
    Task {
        id: "add",
        prose: None,
        code: "def add(a, b):\n    return a + b\n",
        tests: "assert f['add'](2, 3) == 5\nassert f['add'](-1, 1) == 0\n",
    },
    Task {
        id: "is_even",
        prose: None,
        code: "def is_even(n):\n    return n % 2 == 0\n",
        tests: "assert f['is_even'](4)\nassert not f['is_even'](7)\nassert f['is_even'](0)\n",
    },
    Task {
        id: "reverse",
        prose: None,
        code: "def reverse(s):\n    return s[::-1]\n",
        tests: "assert f['reverse']('abc') == 'cba'\nassert f['reverse']('') == ''\n",
    },
    Task {
        id: "largest",
        prose: None,
        code: "def largest(xs):\n    best = xs[0]\n    for x in xs[1:]:\n        if x > best:\n            best = x\n    return best\n",
        tests: "assert f['largest']([3, 9, 2]) == 9\nassert f['largest']([-5]) == -5\n",
    },
    Task {
        id: "factorial",
        prose: None,
        code: "def factorial(n):\n    if n <= 1:\n        return 1\n    return n * factorial(n - 1)\n",
        tests: "assert f['factorial'](0) == 1\nassert f['factorial'](5) == 120\n",
    },
    Task {
        id: "count_vowels",
        prose: None,
        code: "def count_vowels(s):\n    return sum(1 for c in s.lower() if c in 'aeiou')\n",
        tests: "assert f['count_vowels']('Energy') == 2\nassert f['count_vowels']('xyz') == 0\n",
    },
    Task {
        id: "fizzbuzz",
        prose: None,
        code: "def fizzbuzz(n):\n    if n % 15 == 0:\n        return 'FizzBuzz'\n    if n % 3 == 0:\n        return 'Fizz'\n    if n % 5 == 0:\n        return 'Buzz'\n    return str(n)\n",
        tests: "fb = f['fizzbuzz']\nassert [fb(i) for i in (3, 5, 15, 7)] == ['Fizz', 'Buzz', 'FizzBuzz', '7']\n",
    },
    Task {
        id: "is_palindrome",
        prose: None,
        code: "def is_palindrome(s):\n    t = s.lower()\n    return t == t[::-1]\n",
        tests: "assert f['is_palindrome']('Level')\nassert not f['is_palindrome']('watt')\n",
    },
    Task {
        id: "fib",
        prose: Some("Here is an iterative solution:\n\n"),
        code: "def fib(n):\n    a, b = 0, 1\n    for _ in range(n):\n        a, b = b, a + b\n    return a\n",
        tests: "assert [f['fib'](i) for i in range(7)] == [0, 1, 1, 2, 3, 5, 8]\n",
    },
    Task {
        id: "clamp",
        prose: Some("Sure. The function below clamps a value:\n"),
        code: "def clamp(x, lo, hi):\n    return max(lo, min(x, hi))\n",
        tests: "assert f['clamp'](5, 0, 3) == 3\nassert f['clamp'](-2, 0, 3) == 0\nassert f['clamp'](1, 0, 3) == 1\n",
    },
];

const HEADER: &str = "import sys\n\nf = {}\nwith open(sys.argv[1], encoding='utf-8') as src:\n    exec(compile(src.read(), 'candidate', 'exec'), f)\n\n";

fn solution_tokens(task: &Task) -> Vec<String> {
    match task.prose {
        None => tokenize_code(task.code),
        Some(prose) => {
            let mut toks = tokenize_code(prose);
            toks.push("```python\n".into());
            toks.extend(tokenize_code(task.code));
            toks.push("```\n".into());
            toks.extend(tokenize_code("This runs in linear time.\n"));
            toks
        }
    }
}

fn write_task(
    dir: &Path,
    id: &str,
    tests: &str,
    tokens: Vec<String>,
    babble: usize,
) -> Result<serde_json::Value> {
    let source = generate_babbler_stream(&tokens, babble, BUDGET)?;
    let stream = format!("{id}.tokens.ndjson");
    let test_file = format!("{id}_test.py");
    let w = BufWriter::new(File::create(dir.join(&stream))?);
    write_token_stream(w, source.tokens())?;
    std::fs::write(dir.join(&test_file), format!("{HEADER}{tests}"))?;
    Ok(json!({"task_id": id, "stream_path": stream, "tests_path": test_file}))
}

fn write_corpus(dir: &Path, entries: Vec<serde_json::Value>) -> Result<()> {
    let text = serde_json::to_string_pretty(&entries)? + "\n";
    std::fs::write(dir.join("corpus.json"), text)?;
    Ok(())
}

fn main() -> Result<()> {
    let root = std::env::args()
        .nth(1)
        .context("usage: make_corpus <out-dir>")?;
    let root = Path::new(&root);

    let dir = root.join("babblers");
    std::fs::create_dir_all(&dir)?;
    let mut entries = Vec::new();
    for task in BABBLERS {
        let mut entry = write_task(&dir, task.id, task.tests, solution_tokens(task), BUDGET)?;
        if task.prose.is_some() {
            entry["extraction_mode"] = json!("fenced-block");
        }
        entries.push(entry);
    }
    write_corpus(&dir, entries)?;

    let dir = root.join("mixed");
    std::fs::create_dir_all(&dir)?;
    let add = &BABBLERS[0];
    let mut late = babble_filler(24);
    late.extend(tokenize_code(add.code));
    let entries = vec![
        write_task(&dir, "stops_itself", add.tests, tokenize_code(add.code), 0)?,
        write_task(&dir, "late_solution", add.tests, late, BUDGET)?,
        write_task(
            &dir,
            "buggy",
            add.tests,
            tokenize_code("def add(a, b):\n    return a - b\n"),
            BUDGET,
        )?,
        write_task(
            &dir,
            "one_liner",
            add.tests,
            tokenize_code("add = lambda a, b: a + b\n"),
            BUDGET,
        )?,
    ];
    write_corpus(&dir, entries)?;
    Ok(())
}
