// palpas: command line front end for the password manager and its services.

#include <signal.h>
#include <termios.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "palpas/error.hpp"
#include "palpas/net.hpp"
#include "palpas/pps.hpp"
#include "palpas/sss.hpp"
#include "palpas/sync.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace palpas;

namespace {

enum ExitCode {
  kOk = 0,
  kFailure = 1,
  kUsage = 2,
  kAuthentication = 3,
  kNotFound = 4,
  kNetwork = 5,
  kPolicyMissing = 6,
};

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_input: return kUsage;
    case ErrorKind::authentication:
    case ErrorKind::enrollment: return kAuthentication;
    case ErrorKind::not_found:
    case ErrorKind::no_account: return kNotFound;
    case ErrorKind::network: return kNetwork;
    case ErrorKind::policy_missing: return kPolicyMissing;
    default: return kFailure;
  }
}

std::string env_or(const char* name, std::string fallback) {
  const char* v = std::getenv(name);
  return v != nullptr && *v != '\0' ? std::string(v) : fallback;
}

std::string default_vault_path() {
  return (fs::path(env_or("HOME", ".")) / ".palpas" / "device.vault").string();
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot read " + path.string());
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

void write_private(const fs::path& path, const std::string& text) {
  write_file_atomic(path, as_bytes(text));
  fs::permissions(path, fs::perms::owner_read | fs::perms::owner_write);
}

// PALPAS_MPW exists for scripted tests only; interactive use prompts on the
// terminal with echo disabled.
std::string prompt_secret(const std::string& prompt) {
  std::FILE* tty = std::fopen("/dev/tty", "r+");
  if (tty == nullptr) throw Error(ErrorKind::invalid_input, "no terminal for the master password prompt; set PALPAS_MPW");
  const int fd = fileno(tty);
  termios old {};
  const bool have_termios = tcgetattr(fd, &old) == 0;
  if (have_termios) {
    termios silent = old;
    silent.c_lflag &= ~static_cast<tcflag_t>(ECHO);
    tcsetattr(fd, TCSAFLUSH, &silent);
  }
  std::fputs(prompt.c_str(), tty);
  std::fflush(tty);
  std::string line;
  for (int c = std::fgetc(tty); c != EOF && c != '\n'; c = std::fgetc(tty)) line += static_cast<char>(c);
  if (have_termios) tcsetattr(fd, TCSAFLUSH, &old);
  std::fputs("\n", tty);
  std::fclose(tty);
  return line;
}

std::string master_password(bool confirm) {
  if (const char* env = std::getenv("PALPAS_MPW"); env != nullptr) return env;
  auto first = prompt_secret("Master password: ");
  if (confirm && prompt_secret("Repeat master password: ") != first) {
    throw Error(ErrorKind::invalid_input, "master passwords do not match");
  }
  return first;
}

struct Options {
  std::string vault = env_or("PALPAS_VAULT", default_vault_path());
  std::string sss = env_or("PALPAS_SSS", "https://127.0.0.1:8443");
  std::string sss_ca = env_or("PALPAS_SSS_CA", "");
  std::string pps = env_or("PALPAS_PPS", "http://127.0.0.1:8080");
  bool json = false;
  std::uint32_t kdf_iterations = kDefaultKdfIterations;

  std::string url;
  std::string username;
  std::string handle;
  std::string fingerprint;
  std::string bundle;
  std::string file;
  std::string submitter = env_or("PALPAS_SUBMITTER", "anonymous");
  std::int64_t min_version = -1;
  std::uint64_t version = 0;
  int rating = 0;
  bool another = false;
  bool commit = false;
  bool abandon = false;
  bool confirm_last = false;
  std::string listen = "127.0.0.1:0";
  std::string state;
};

class Output {
 public:
  explicit Output(bool json) : json_(json) {}
  bool is_json() const { return json_; }

  // Emits one JSON document in JSON mode, the given text otherwise.
  void emit(const json& doc, const std::string& text) const {
    if (json_) {
      std::cout << doc.dump() << std::endl;
    } else {
      std::cout << text << std::flush;
    }
  }

 private:
  bool json_;
};

SyncClient make_client(const Options& o) {
  if (o.sss.rfind("https://", 0) != 0) {
    throw Error(ErrorKind::invalid_input, "the salt sync service must be reached over https");
  }
  if (o.sss_ca.empty()) throw Error(ErrorKind::invalid_input, "--sss-ca (or PALPAS_SSS_CA) is required");
  const auto ca_pem = read_text(o.sss_ca);
  SssConnector connector = [url = o.sss, ca_pem](const std::optional<Credential>& cred) -> std::shared_ptr<Transport> {
    TlsClientConfig tls{ca_pem, std::nullopt, std::nullopt};
    if (cred) {
      tls.certificate_pem = cred->certificate_pem;
      tls.key_pem = cred->key_pem;
    }
    return std::make_shared<HttpTransport>(url, tls);
  };
  const auto parent = fs::path(o.vault).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
  return SyncClient(VaultFile(o.vault), connector, std::make_shared<HttpTransport>(o.pps), system_random(),
                    o.kdf_iterations);
}

PpsClient make_pps(const Options& o) { return PpsClient(std::make_shared<HttpTransport>(o.pps)); }

std::optional<std::string> optional_handle(const Options& o) {
  return o.handle.empty() ? std::nullopt : std::optional<std::string>(o.handle);
}

void cmd_setup(const Options& o, const Output& out) {
  auto client = make_client(o);
  const auto e = client.setup(master_password(true));
  out.emit({{"vault", o.vault}, {"account_id", e.account_id}, {"fingerprint", e.fingerprint}},
           "Device enrolled.\nvault: " + o.vault + "\nfingerprint: " + e.fingerprint + "\n");
}

void cmd_export(const Options& o, const Output& out) {
  const auto bundle = make_client(o).export_bundle(master_password(false));
  out.emit({{"bundle", bundle}}, bundle + "\n");
}

void cmd_import(const Options& o, const Output& out) {
  std::string text = o.bundle;
  if (text.empty() || text == "-") {
    std::ostringstream in;
    in << std::cin.rdbuf();
    text = in.str();
  }
  auto client = make_client(o);
  const auto e = client.import_bundle(text, master_password(true));
  out.emit({{"vault", o.vault}, {"account_id", e.account_id}, {"fingerprint", e.fingerprint}},
           "Device enrolled.\nvault: " + o.vault + "\nfingerprint: " + e.fingerprint + "\n");
}

void cmd_add(const Options& o, const Output& out) {
  const auto r = make_client(o).add_password(master_password(false), o.url, o.username, o.another);
  out.emit({{"url", o.url}, {"username", o.username}, {"password", r.password}, {"handle", r.handle},
            {"policy_version", r.policy_version}},
           "username: " + o.username + "\npassword: " + r.password + "\nhandle: " + r.handle + "\n");
}

void cmd_login(const Options& o, const Output& out) {
  const auto results = make_client(o).login(master_password(false), o.url);
  json accounts = json::array();
  std::string text;
  for (const auto& r : results) {
    accounts.push_back({{"handle", r.handle}, {"username", r.username}, {"password", r.password}});
    if (!text.empty()) text += "\n";
    text += "username: " + r.username + "\npassword: " + r.password + "\nhandle: " + r.handle + "\n";
  }
  out.emit({{"url", o.url}, {"accounts", accounts}}, text);
}

void cmd_update(const Options& o, const Output& out) {
  if (o.commit && o.abandon) throw Error(ErrorKind::invalid_input, "--commit and --abandon are exclusive");
  auto client = make_client(o);
  const auto mpw = master_password(false);
  if (o.commit) {
    const auto r = client.commit_update(mpw, o.url, optional_handle(o));
    out.emit({{"url", o.url}, {"status", "committed"}, {"handle", r.handle}, {"username", r.username},
              {"password", r.password}},
             "Update committed.\nusername: " + r.username + "\npassword: " + r.password + "\n");
  } else if (o.abandon) {
    client.abandon_update(mpw, o.url, optional_handle(o));
    out.emit({{"url", o.url}, {"status", "abandoned"}}, "Update abandoned.\n");
  } else {
    const auto p = client.propose_update(mpw, o.url, optional_handle(o));
    out.emit({{"url", o.url},
              {"status", "proposed"},
              {"handle", p.handle},
              {"username", p.username},
              {"old_password", p.old_password},
              {"new_password", p.new_password},
              {"policy_version", p.policy_version},
              {"policy_changed", p.policy_changed}},
             "username: " + p.username + "\nold password: " + p.old_password + "\nnew password: " +
                 p.new_password + "\nChange it at the service, then run `palpas update " + o.url +
                 " --commit` (or --abandon).\n");
  }
}

void cmd_revoke(const Options& o, const Output& out) {
  make_client(o).revoke(master_password(false), o.fingerprint, o.confirm_last);
  out.emit({{"fingerprint", o.fingerprint}, {"status", "revoked"}}, "Revoked " + o.fingerprint + "\n");
}

void cmd_devices(const Options& o, const Output& out) {
  auto client = make_client(o);
  const auto mpw = master_password(false);
  const auto self = client.fingerprint(mpw);
  json list = json::array();
  std::string text;
  for (const auto& d : client.devices(mpw)) {
    list.push_back({{"fingerprint", d.fingerprint}, {"enrolled_at", d.enrolled_at}, {"revoked", d.revoked},
                    {"this_device", d.fingerprint == self}});
    text += d.fingerprint + (d.revoked ? "  revoked" : "  active") + (d.fingerprint == self ? "  (this device)" : "") + "\n";
  }
  out.emit({{"devices", list}}, text);
}

void cmd_policy_submit(const Options& o, const Output& out) {
  const auto policy = parse_policy(read_text(o.file));
  const auto r = make_pps(o).submit_policy(o.url, policy, o.submitter);
  json doc = {{"url", o.url}, {"status", std::string(to_string(r.status))}, {"supporters", r.supporters}};
  std::string text = "status: " + std::string(to_string(r.status)) + "\n";
  if (r.status != SubmissionStatus::pending) {
    doc["version"] = r.version;
    text += "version: " + std::to_string(r.version) + "\n";
  }
  out.emit(doc, text);
}

void cmd_policy_get(const Options& o, const Output& out) {
  std::optional<std::uint64_t> min_version;
  if (o.min_version >= 0) min_version = static_cast<std::uint64_t>(o.min_version);
  const auto p = make_pps(o).fetch_policy(o.url, min_version);
  if (!p) {
    throw Error(ErrorKind::not_found, min_version ? "no newer published policy for " + o.url
                                                  : "no published policy for " + o.url);
  }
  const auto xml = serialize_policy(p->policy);
  out.emit({{"url", o.url},
            {"version", p->version},
            {"rating_mean", p->rating_mean()},
            {"rating_count", p->rating_count},
            {"policy", xml}},
           xml);
}

void cmd_policy_rate(const Options& o, const Output& out) {
  make_pps(o).rate_policy(o.url, o.version, o.rating, o.submitter);
  out.emit({{"url", o.url}, {"version", o.version}, {"status", "recorded"}}, "Rating recorded.\n");
}

std::pair<std::string, int> split_listen(const std::string& listen) {
  const auto colon = listen.rfind(':');
  if (colon == std::string::npos) throw Error(ErrorKind::invalid_input, "--listen expects host:port");
  try {
    return {listen.substr(0, colon), std::stoi(listen.substr(colon + 1))};
  } catch (const std::exception&) {
    throw Error(ErrorKind::invalid_input, "--listen expects host:port");
  }
}

// Blocks SIGINT/SIGTERM in every thread, runs the server in the background
// and returns once one of them arrives.
void serve_until_signal(HttpServer& server, const Output& out, const std::string& what) {
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);
  server.start();
  out.emit({{"service", what}, {"url", server.base_url()}}, what + " listening on " + server.base_url() + "\n");
  int sig = 0;
  sigwait(&set, &sig);
  server.stop();
}

void cmd_serve_sss(const Options& o, const Output& out) {
  if (o.state.empty()) throw Error(ErrorKind::invalid_input, "--state is required");
  const fs::path dir(o.state);
  fs::create_directories(dir);
  const auto [host, port] = split_listen(o.listen);
  if (!fs::exists(dir / "ca.pem")) {
    const auto ca = CertificateAuthority::create("palpas salt sync service");
    write_private(dir / "ca.key", ca.key_pem());
    write_file_atomic(dir / "ca.pem", as_bytes(ca.certificate_pem()));
  }
  const auto ca = CertificateAuthority::load(read_text(dir / "ca.pem"), read_text(dir / "ca.key"));
  std::vector<std::string> hosts = {"localhost", "127.0.0.1"};
  if (host != "localhost" && host != "127.0.0.1" && host != "0.0.0.0") hosts.push_back(host);
  const auto server_key = PrivateKey::generate();
  const auto server_cert = ca.issue_server(server_key, hosts);

  SaltSyncService sss(ca, std::make_shared<FileJournal>(dir / "journal.log"));
  HttpServer server(sss.handler(), TlsServerConfig{server_cert, server_key.to_pem(), ca.certificate_pem()});
  server.bind(host, port);
  serve_until_signal(server, out, "sss");
}

void cmd_serve_pps(const Options& o, const Output& out) {
  if (o.state.empty()) throw Error(ErrorKind::invalid_input, "--state is required");
  const fs::path dir(o.state);
  fs::create_directories(dir);
  const auto [host, port] = split_listen(o.listen);
  PolicyService pps(std::make_shared<FileJournal>(dir / "journal.log"));
  HttpServer server(pps.handler());
  server.bind(host, port);
  serve_until_signal(server, out, "pps");
}

}  // namespace

int main(int argc, char** argv) {
  Options o;
  CLI::App app{"palpas: deterministic password manager with salt synchronization"};
  app.require_subcommand(1);
  app.add_option("--vault", o.vault, "Vault file (env PALPAS_VAULT)");
  app.add_option("--sss", o.sss, "Salt sync service base URL (env PALPAS_SSS)");
  app.add_option("--sss-ca", o.sss_ca, "CA certificate of the salt sync service (env PALPAS_SSS_CA)");
  app.add_option("--pps", o.pps, "Policy service base URL (env PALPAS_PPS)");
  app.add_flag("--json", o.json, "Machine-readable JSON output");

  std::function<void(const Options&, const Output&)> action;
  auto bind = [&](CLI::App* sub, auto fn) { sub->callback([&action, fn] { action = fn; }); };

  auto* setup = app.add_subcommand("setup", "Create a vault and a new account");
  setup->add_option("--kdf-iterations", o.kdf_iterations, "PBKDF2 iterations for the vault")->check(CLI::PositiveNumber);
  bind(setup, cmd_setup);

  bind(app.add_subcommand("export-bundle", "Print a one-time bundle for enrolling another device"), cmd_export);

  auto* import = app.add_subcommand("import-bundle", "Enroll this device from a bundle (argument or stdin)");
  import->add_option("bundle", o.bundle, "Bundle text, or - for stdin");
  import->add_option("--kdf-iterations", o.kdf_iterations, "PBKDF2 iterations for the vault")->check(CLI::PositiveNumber);
  bind(import, cmd_import);

  auto* add = app.add_subcommand("add", "Create a password for a service");
  add->add_option("url", o.url)->required();
  add->add_option("username", o.username)->required();
  add->add_flag("--another", o.another, "Add a further account at a service that already has one");
  bind(add, cmd_add);

  auto* login = app.add_subcommand("login", "Show the credentials for a service");
  login->add_option("url", o.url)->required();
  bind(login, cmd_login);

  auto* update = app.add_subcommand("update", "Propose, commit or abandon a password change");
  update->add_option("url", o.url)->required();
  update->add_option("--handle", o.handle, "Record handle when the service has several accounts");
  update->add_flag("--commit", o.commit, "The service accepted the new password");
  update->add_flag("--abandon", o.abandon, "Discard the proposed password");
  bind(update, cmd_update);

  auto* revoke = app.add_subcommand("revoke", "Revoke a device by certificate fingerprint");
  revoke->add_option("fingerprint", o.fingerprint)->required();
  revoke->add_flag("--confirm-last", o.confirm_last, "Allow revoking the last active device");
  bind(revoke, cmd_revoke);

  bind(app.add_subcommand("devices", "List the account's devices"), cmd_devices);

  auto* policy = app.add_subcommand("policy", "Policy service commands");
  policy->require_subcommand(1);
  auto* submit = policy->add_subcommand("submit", "Submit a policy document for a service");
  submit->add_option("url", o.url)->required();
  submit->add_option("file", o.file)->required()->check(CLI::ExistingFile);
  submit->add_option("--submitter", o.submitter, "Self-chosen submitter id (env PALPAS_SUBMITTER)");
  bind(submit, cmd_policy_submit);
  auto* get = policy->add_subcommand("get", "Fetch the published policy for a service");
  get->add_option("url", o.url)->required();
  get->add_option("--min-version", o.min_version, "Only return a policy newer than this version");
  bind(get, cmd_policy_get);
  auto* rate = policy->add_subcommand("rate", "Rate a published policy from 1 to 5");
  rate->add_option("url", o.url)->required();
  rate->add_option("version", o.version)->required();
  rate->add_option("rating", o.rating)->required();
  rate->add_option("--submitter", o.submitter, "Self-chosen submitter id (env PALPAS_SUBMITTER)");
  bind(rate, cmd_policy_rate);

  auto* serve = app.add_subcommand("serve", "Run a service");
  serve->require_subcommand(1);
  for (auto [name, fn] : {std::pair{"sss", cmd_serve_sss}, std::pair{"pps", cmd_serve_pps}}) {
    auto* s = serve->add_subcommand(name, name == std::string("sss") ? "Salt sync service (HTTPS)" : "Policy service (HTTP)");
    s->add_option("--listen", o.listen, "host:port, port 0 picks a free one");
    s->add_option("--state", o.state, "State directory")->required();
    bind(s, fn);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }

  const Output out(o.json);
  try {
    action(o, out);
    return kOk;
  } catch (const Error& e) {
    if (out.is_json()) {
      std::cout << json{{"error", std::string(to_string(e.kind()))}, {"message", e.what()}}.dump() << std::endl;
    } else {
      std::cerr << "palpas: " << e.what() << "\n";
    }
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    if (out.is_json()) {
      std::cout << json{{"error", "internal"}, {"message", e.what()}}.dump() << std::endl;
    } else {
      std::cerr << "palpas: " << e.what() << "\n";
    }
    return kFailure;
  }
}
