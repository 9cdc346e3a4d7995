use std::io::{self, BufRead, IsTerminal};

use dynid::Password;

/// Reads passwords without echo from the terminal, or one per line from
/// stdin when stdin is not a terminal.
pub struct PasswordPrompt {
    interactive: bool,
    lines: io::Lines<io::StdinLock<'static>>,
}

impl PasswordPrompt {
    pub fn new() -> Self {
        let stdin = io::stdin();
        PasswordPrompt { interactive: stdin.is_terminal(), lines: stdin.lock().lines() }
    }

    fn read_raw(&mut self, prompt: &str) -> io::Result<String> {
        if self.interactive {
            return rpassword::prompt_password(prompt);
        }
        match self.lines.next() {
            Some(line) => Ok(line?.trim_end_matches('\r').to_owned()),
            None => Err(io::Error::new(io::ErrorKind::UnexpectedEof, "no password on stdin")),
        }
    }

    pub fn read(&mut self, prompt: &str) -> Result<Password, String> {
        let raw = self.read_raw(prompt).map_err(|e| format!("cannot read password: {e}"))?;
        Password::new(raw).map_err(|e| e.to_string())
    }

    /// On a terminal, asks twice and insists both entries match.
    pub fn read_new(&mut self, prompt: &str) -> Result<Password, String> {
        let first = self.read(prompt)?;
        if self.interactive {
            let again = self.read("Repeat password: ")?;
            if again != first {
                return Err("passwords do not match".into());
            }
        }
        Ok(first)
    }
}
