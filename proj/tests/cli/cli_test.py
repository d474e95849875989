#!/usr/bin/env python3
"""End-to-end run of the palpas binary against live sss and pps processes."""

import json
import os
import re
import signal
import subprocess
import sys
import tempfile
from pathlib import Path

EXAMPLE_POLICY = """<?xml version="1.0" encoding="UTF-8"?>
<PasswordPolicy>
\t<MinLength>6</MinLength>
\t<MaxLength>12</MaxLength>
\t<CharacterSets>
\t\t<CharacterSet name="LowercaseLetters">
\t\t\t<Characters>abcdefghijklmnopqrstuvwxyz</Characters>
\t\t</CharacterSet>
\t\t<CharacterSet name="UppercaseLetters">
\t\t\t<Characters>ABCDEFGHIJKLMNOPQRSTUVWXYZ</Characters>
\t\t</CharacterSet>
\t\t<CharacterSet name="Digits" minOccurrence="1">
\t\t\t<Characters>0123456789</Characters>
\t\t</CharacterSet>
\t</CharacterSets>
</PasswordPolicy>
"""

MPW = "correct horse battery staple"
URL = "https://shop.example.com"
USERNAME = "alice@example.org"

failures = []
stderr_log = []
secrets = {MPW}


def check(cond, what):
    print(("ok   " if cond else "FAIL ") + what)
    if not cond:
        failures.append(what)


class Cli:
    def __init__(self, binary, sss, ca, pps):
        self.binary = binary
        self.base = ["--sss", sss, "--sss-ca", ca, "--pps", pps]

    def run(self, *args, vault=None, mpw=MPW, stdin=None, json_mode=True):
        env = dict(os.environ)
        env.pop("PALPAS_MPW", None)
        if mpw is not None:
            env["PALPAS_MPW"] = mpw
        cmd = [self.binary] + self.base + (["--vault", str(vault)] if vault else [])
        cmd += (["--json"] if json_mode else []) + list(args)
        p = subprocess.run(cmd, input=stdin, capture_output=True, text=True, env=env, timeout=60,
                           start_new_session=True)
        stderr_log.append(p.stderr)
        doc = None
        if json_mode and p.stdout.strip():
            doc = json.loads(p.stdout.strip().splitlines()[-1])
        return p.returncode, doc, p


def start_server(binary, kind, state):
    proc = subprocess.Popen([binary, "serve", kind, "--listen", "127.0.0.1:0", "--state", str(state)],
                            stdout=subprocess.PIPE, stderr=subprocess.PIPE, text=True)
    line = proc.stdout.readline()
    m = re.search(r"(https?://\S+)", line)
    if not m:
        proc.kill()
        raise SystemExit(f"{kind} did not start: {line!r} {proc.stderr.read()}")
    return proc, m.group(1)


def stop(proc):
    proc.send_signal(signal.SIGTERM)
    check(proc.wait(timeout=10) == 0, f"server pid {proc.pid} exits cleanly on SIGTERM")
    stderr_log.append(proc.stderr.read())


def main(binary):
    with tempfile.TemporaryDirectory(prefix="palpas-cli-") as tmp:
        tmp = Path(tmp)
        sss_state, pps_state = tmp / "sss", tmp / "pps"
        sss_proc, sss_url = start_server(binary, "sss", sss_state)
        pps_proc, pps_url = start_server(binary, "pps", pps_state)
        check(sss_url.startswith("https://"), "sss serves https")
        check(oct((sss_state / "ca.key").stat().st_mode & 0o777) == "0o600", "ca.key is owner-only")
        cli = Cli(binary, sss_url, str(sss_state / "ca.pem"), pps_url)
        vault_a, vault_b = tmp / "a" / "device.vault", tmp / "b" / "device.vault"
        policy_file = tmp / "policy.xml"
        policy_file.write_text(EXAMPLE_POLICY)

        try:
            # Policy publication needs three distinct submitters.
            statuses = []
            for who in ("s1", "s2", "s3"):
                _, doc, _ = cli.run("policy", "submit", URL, str(policy_file), "--submitter", who, mpw=None)
                statuses.append(doc["status"])
            check(statuses == ["pending", "pending", "published"], f"publication threshold {statuses}")
            code, doc, _ = cli.run("policy", "get", URL, mpw=None)
            check(code == 0 and doc["version"] == 1, "policy get returns version 1")
            code, _, _ = cli.run("policy", "get", "https://nothing.example", mpw=None)
            check(code == 4, "policy get for an unknown service exits 4")
            code, _, _ = cli.run("policy", "rate", URL, "1", "5", mpw=None)
            check(code == 0, "policy rate")

            code, doc, _ = cli.run("setup", "--kdf-iterations", "1000", vault=vault_a)
            check(code == 0 and vault_a.exists(), "setup creates a vault")
            fp_a = doc["fingerprint"]
            code, _, _ = cli.run("setup", "--kdf-iterations", "1000", vault=vault_a)
            check(code == 1, "second setup on the same vault fails")

            code, doc, _ = cli.run("add", URL, USERNAME, vault=vault_a)
            check(code == 0, "add")
            password = doc["password"]
            secrets.add(password)
            check(6 <= len(password) <= 12 and any(c.isdigit() for c in password), "password satisfies policy")
            code, _, _ = cli.run("add", URL, USERNAME, vault=vault_a)
            check(code == 1, "duplicate add is refused")

            code, _, p = cli.run("add", "https://nopolicy.example", "bob", vault=vault_a, json_mode=False)
            check(code == 6 and "palpas policy submit" in p.stderr, "missing policy exits 6 with guidance")

            code, doc, _ = cli.run("login", URL, vault=vault_a)
            check(code == 0 and doc["accounts"][0]["password"] == password
                  and doc["accounts"][0]["username"] == USERNAME, "login reproduces the password")
            code, _, _ = cli.run("login", URL, vault=vault_a, mpw="wrong password")
            check(code == 3, "wrong master password exits 3")
            code, _, _ = cli.run("login", "https://other.example", vault=vault_a)
            check(code == 4, "login without an account exits 4")

            code, doc, _ = cli.run("export-bundle", vault=vault_a)
            bundle = doc["bundle"]
            check(code == 0 and len(bundle) == 132, "bundle is 132 characters")
            code, doc, _ = cli.run("import-bundle", "--kdf-iterations", "1000", vault=vault_b, stdin=bundle + "\n")
            check(code == 0, "import-bundle from stdin")
            fp_b = doc["fingerprint"]
            code, _, _ = cli.run("import-bundle", bundle, "--kdf-iterations", "1000", vault=tmp / "c.vault")
            check(code == 3, "replayed bundle token exits 3")

            code, doc, _ = cli.run("login", URL, vault=vault_b)
            check(code == 0 and doc["accounts"][0]["password"] == password, "second device derives the same password")

            code, doc, _ = cli.run("update", URL, vault=vault_b)
            new_password = doc["new_password"]
            secrets.add(new_password)
            check(code == 0 and doc["old_password"] == password and new_password != password, "update proposal")
            _, doc, _ = cli.run("login", URL, vault=vault_a)
            check(doc["accounts"][0]["password"] == password, "proposal leaves the old password in force")
            code, doc, _ = cli.run("update", URL, "--commit", vault=vault_b)
            check(code == 0 and doc["password"] == new_password, "update commit")
            _, doc, _ = cli.run("login", URL, vault=vault_a)
            check(doc["accounts"][0]["password"] == new_password, "first device sees the committed password")
            code, _, _ = cli.run("update", URL, "--commit", vault=vault_b)
            check(code == 1, "commit without a proposal fails")

            # State survives a restart of the sync service.
            stop(sss_proc)
            sss_proc, sss_url = start_server(binary, "sss", sss_state)
            cli = Cli(binary, sss_url, str(sss_state / "ca.pem"), pps_url)
            _, doc, _ = cli.run("login", URL, vault=vault_a)
            check(doc is not None and doc["accounts"][0]["password"] == new_password, "login after sss restart")

            _, doc, _ = cli.run("devices", vault=vault_a)
            fps = {d["fingerprint"] for d in doc["devices"]}
            check(fps == {fp_a, fp_b}, "devices lists both devices")
            code, _, _ = cli.run("revoke", fp_b, vault=vault_a)
            check(code == 0, "revoke second device")
            code, _, _ = cli.run("login", URL, vault=vault_b)
            check(code == 3, "revoked device exits 3")
            code, _, _ = cli.run("revoke", fp_a, vault=vault_a)
            check(code == 1, "revoking the last device needs --confirm-last")

            code, _, _ = cli.run("frobnicate", mpw=None)
            check(code == 2, "unknown command exits 2")
            code, _, _ = cli.run("login", URL, vault=vault_a, mpw=None, stdin="")
            check(code == 2, "no master password source exits 2")
        finally:
            for proc in (sss_proc, pps_proc):
                if proc.poll() is None:
                    stop(proc)

        all_stderr = "\n".join(stderr_log)
        check(not any(s in all_stderr for s in secrets), "no secret reaches stderr")
        sss_bytes = b"".join(f.read_bytes() for f in sss_state.rglob("*") if f.is_file())
        leaked = [s for s in secrets | {USERNAME, URL} if s.encode() in sss_bytes]
        check(not leaked, "sss state holds no password, username or url")

    print(f"{len(failures)} failure(s)")
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main(sys.argv[1]))
