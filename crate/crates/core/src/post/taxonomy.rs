use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::scanner::{ApiCatalog, Mode};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Category {
    /// 1-based position in the taxonomy; bit `index - 1` in feature vectors.
    pub index: usize,
    pub slug: String,
    pub name: String,
    pub group: String,
    pub browser: bool,
    pub npm: bool,
    /// Lowercase substrings matched against guard tokens.
    pub signals: Vec<String>,
}

impl Category {
    pub fn applies_to(&self, mode: Mode) -> bool {
        match mode {
            Mode::Browser => self.browser,
            Mode::Npm => self.npm,
        }
    }
}

type Row = (&'static str, &'static str, &'static str, bool, bool, &'static [&'static str]);

const B: bool = true;
const N: bool = true;
const X: bool = false;

#[rustfmt::skip]
const TABLE: [Row; 28] = [
    ("email_login", "Email login", "Login", B, N, &["email", "islogged", "loggedin", "login", "signin"]),
    ("social_signup", "Social media signup", "Login", B, N, &["socialsignup", "facebook", "twitter", "google", "instagram"]),
    ("crypto_wallet", "Crypto wallet login", "Login", B, N, &["jscrypto", ".connected", "ethereum", "wallet", "metamask", "web3"]),
    ("localstorage_timebomb", "Localstorage timebomb", "Timebombs", B, N, &["localstorage", "storage.get", "storage.set", "storage.local", "storage.sync", "installtime", "installdate"]),
    ("cookie_timebomb", "Cookie timebomb", "Timebombs", B, N, &["cookie", "cookies.get", "cookies.set", "browser.cookies"]),
    ("country", "Country", "Fingerprint", B, X, &["country", "geoip", "timezone", "navigator.language", "locale"]),
    ("window_size", "Window size", "Fingerprint", B, X, &["window.height", "window.width", "innerwidth", "innerheight", "outerwidth", "outerheight", "screen.width", "screen.height"]),
    ("browser_type", "Browser type", "Fingerprint", B, X, &["useragent", "ischrome", "isfirefox", "isedge", "navigator.vendor"]),
    ("os_check", "OS check", "Fingerprint", B, X, &["navigator.platform", "oscpu", "windows nt", "macintel", "iswindows", "ismac"]),
    ("open_devtools", "Open devtools", "Fingerprint", B, X, &["devtools", "isdevtoolsopen", "firebug"]),
    ("visitor_id", "Visitor ID", "Fingerprint", B, X, &["visitorid", "fingerprint", "clientid", "deviceid"]),
    ("recaptcha", "Recaptcha", "Fingerprint", B, X, &["recaptcha", "captcha"]),
    ("microphone", "Microphone", "Fingerprint", B, X, &["getusermedia", "audiocontext", "mediadevices", "microphone"]),
    ("phone_type", "Phone type", "Fingerprint", B, X, &["ismobile", "android", "iphone", "maxtouchpoints", "ontouchstart"]),
    ("key_presses", "Key presses", "User Interaction", B, X, &["keyup", "keydown", "keypress"]),
    ("multiple_keys", "Multiple keys", "User Interaction", B, X, &["ctrlkey", "shiftkey", "altkey", "metakey", "keycombo"]),
    ("mouse_clicks", "Mouse clicks", "User Interaction", B, X, &["click", "mousedown", "mouseup", "mousemove"]),
    ("notification_settings", "Notification settings", "User Interaction", B, N, &["notification", "settings", "options"]),
    ("blocked_sites", "Blocked (specific websites)", "Website Check", B, X, &["blocked", "blacklist", "easylist", "linkedin", "tab.url", "location.hostname", "location.host"]),
    ("dom", "DOM", "Website Check", B, X, &["queryselector", "getelementbyid", "getelementsby", "hasclass", "readystate", "domcontentloaded", "$()"]),
    ("random_value", "Random value", "Other", B, N, &["math.random", "random"]),
    ("server_side", "Server-side", "Other", B, N, &["serverflag", "remoteconfig", "res.status", "xhr.status", "response.enabled"]),
    ("generic_bot", "Generic bot", "Other", B, X, &["webdriver", "headless", "phantom", "selenium", "isbot"]),
    ("password_path", "Password path", "Other", X, N, &["/etc/passwd", "passwd", "/etc/shadow"]),
    ("ip_port", "IP:PORT pair", "Other", X, N, &["networkinterfaces", "ipaddress", "remoteaddress", "remoteport", "ip:port", "127.0.0.1"]),
    ("runs_in_browser", "Runs in-browser", "Other", X, N, &["window", "document", "navigator", "isbrowser"]),
    ("wx_permission", "W/X permission", "Other", X, N, &["fs.access", "w_ok", "x_ok", "accesssync", "chmod", "getuid"]),
    ("local_config", "Local config", "Other", X, N, &[".npmrc", "config", "homedir", ".env", "existssync"]),
];

pub const CATEGORY_COUNT: usize = 28;

/// Built-in category slug to signal list.
pub fn default_signal_table() -> BTreeMap<String, Vec<String>> {
    TABLE.iter().map(|r| (r.0.to_string(), r.5.iter().map(|s| s.to_string()).collect())).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvasionTaxonomy {
    pub categories: Vec<Category>,
}

impl Default for EvasionTaxonomy {
    fn default() -> Self {
        let categories = TABLE
            .iter()
            .enumerate()
            .map(|(i, r)| Category {
                index: i + 1,
                slug: r.0.to_string(),
                name: r.1.to_string(),
                group: r.2.to_string(),
                browser: r.3,
                npm: r.4,
                signals: r.5.iter().map(|s| s.to_string()).collect(),
            })
            .collect();
        EvasionTaxonomy { categories }
    }
}

impl EvasionTaxonomy {
    /// Built-in categories with signal lists taken from the catalog where it provides them.
    pub fn from_catalog(catalog: &ApiCatalog) -> Self {
        let mut t = EvasionTaxonomy::default();
        for c in &mut t.categories {
            if let Some(sig) = catalog.evasion_apis.get(&c.slug) {
                c.signals = sig.iter().map(|s| s.to_lowercase()).collect();
            }
        }
        t
    }

    pub fn by_slug(&self, slug: &str) -> Option<&Category> {
        self.categories.iter().find(|c| c.slug == slug)
    }

    pub fn applicable(&self, mode: Mode) -> impl Iterator<Item = &Category> {
        self.categories.iter().filter(move |c| c.applies_to(mode))
    }

    /// Categories with any signal contained in any token. Tokens must already be lowercase.
    pub fn matching<'a>(&'a self, tokens: &'a [String], mode: Mode) -> impl Iterator<Item = &'a Category> + 'a {
        self.applicable(mode).filter(move |c| c.signals.iter().any(|s| tokens.iter().any(|t| t.contains(s.as_str()))))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape() {
        let t = EvasionTaxonomy::default();
        assert_eq!(t.categories.len(), CATEGORY_COUNT);
        let browser = t.applicable(Mode::Browser).count();
        let npm = t.applicable(Mode::Npm).count();
        assert_eq!(browser, 23);
        assert_eq!(npm, 13);
        assert!(!t.by_slug("password_path").unwrap().browser);
        assert!(!t.by_slug("open_devtools").unwrap().npm);
        for (i, c) in t.categories.iter().enumerate() {
            assert_eq!(c.index, i + 1);
            assert!(!c.signals.is_empty());
            assert!(c.signals.iter().all(|s| *s == s.to_lowercase()));
        }
    }

    #[test]
    fn browser_and_npm_only_counts() {
        let t = EvasionTaxonomy::default();
        let only_b = t.categories.iter().filter(|c| c.browser && !c.npm).count();
        let only_n = t.categories.iter().filter(|c| c.npm && !c.browser).count();
        assert_eq!((only_b, only_n), (15, 5));
    }
}
